"""Rebuild the small tabular benchmark CSVs under data/.

Sources are public UCI datasets redistributed inside PyPI packages, so the
script only needs `pip download` access:

    breastw     MASS::biopsy (rdatasets wheel), rows with missing values dropped
    wbc         benign rows of breastw plus 10 malignant rows (seeded subsample)
    pima        KEEL pima (keel-ds wheel)
    ionosphere  UCI ionosphere (Orange3 wheel), first two columns dropped
    musk        UCI Musk v2 (mil wheel), non-musk molecules 55/90/91 as
                inliers and musk molecules 1/3 as outliers

Every file has a header, features f1..fD and a 0/1 label column `y`
(1 = outlier).
"""

import csv
import glob
import io
import lzma
import os
import pickle
import random
import subprocess
import sys
import tempfile
import zipfile

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def fetch(pkg, version, tmp):
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, f"{pkg}=={version}"]
    )
    return zipfile.ZipFile(glob.glob(os.path.join(tmp, "*.whl"))[0])


def write(name, rows, labels):
    d = len(rows[0])
    with open(os.path.join(OUT, f"{name}.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{j + 1}" for j in range(d)] + ["y"])
        for r, y in zip(rows, labels):
            w.writerow(list(r) + [y])
    print(f"{name}: n={len(rows)} d={d} outliers={sum(labels)}")


def main():
    os.makedirs(OUT, exist_ok=True)
    with tempfile.TemporaryDirectory() as t:
        z = fetch("rdatasets", "0.2.10", os.path.join(t, "r"))
        df = pickle.loads(lzma.decompress(z.read("rdatasets/_data/MASS/biopsy.pkl.compress")))
        df = df.dropna()
        cols = [f"V{i}" for i in range(1, 10)]
        rows = [[int(v) for v in r] for r in df[cols].itertuples(index=False)]
        labels = [int(c == "malignant") for c in df["class"]]
        write("breastw", rows, labels)

        rng = random.Random(42)
        mal = [i for i, y in enumerate(labels) if y == 1]
        keep = set(rng.sample(mal, 10))
        ben = [i for i, y in enumerate(labels) if y == 0]
        sub = sorted(set(rng.sample(ben, 213)) | keep)
        write("wbc", [rows[i] for i in sub], [labels[i] for i in sub])

        z = fetch("keel-ds", "0.2.5", os.path.join(t, "k"))
        text = z.read("keel_ds/data/balanced/raw/pima.dat").decode()
        rows, labels = [], []
        for line in text.splitlines():
            if not line.strip() or line.startswith("@"):
                continue
            parts = [p.strip() for p in line.split(",")]
            rows.append(parts[:-1])
            labels.append(int(parts[-1] == "tested_positive"))
        write("pima", rows, labels)

        z = fetch("orange3", "3.39.0", os.path.join(t, "o"))
        text = z.read("Orange/tests/datasets/ionosphere.tab").decode()
        rows, labels = [], []
        for line in text.splitlines()[3:]:
            parts = line.split("\t")
            rows.append(parts[2:-1])
            labels.append(int(parts[-1] == "b"))
        write("ionosphere", rows, labels)

        z = fetch("mil", "1.0.5", os.path.join(t, "m"))
        text = z.read("mil/data/datasets/csv/musk2.csv").decode()
        rows, labels = [], []
        for r in csv.reader(io.StringIO(text)):
            bag = int(r[1])
            if bag in (55, 90, 91):
                labels.append(0)
            elif bag in (1, 3):
                labels.append(1)
            else:
                continue
            rows.append(r[2:])
        write("musk", rows, labels)


if __name__ == "__main__":
    main()
