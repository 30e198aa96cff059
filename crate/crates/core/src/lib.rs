//! Unsupervised outlier detection with an under-fitted importance-weighted
//! autoencoder: adaptive loss truncation, batch increment and a within-run
//! ensemble score, plus the ODIM and plain baselines it is compared with.

pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod iwae;
pub mod metrics;
pub mod optim;
pub mod seeding;
pub mod tensor;
pub mod trainer;
