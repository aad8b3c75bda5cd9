#!/usr/bin/env python3
"""Regenerates the CSV files under data/ from their public UCI sources.

Iris and WDBC are read from the copies bundled with scikit-learn. German
Credit (statlog) and Contraceptive Method Choice are read from the raw UCI
files shipped inside the ``keel-ds`` wheel (``pip download keel-ds``).
Categorical German Credit codes such as ``A43`` are mapped to their ordinal
suffix (``3``).
"""
import argparse
import csv
import pathlib
import zipfile

import numpy as np
from sklearn import datasets

GERMAN_COLUMNS = [
    "Account Balance", "Duration of Credit (month)", "Payment Status of Previous Credit",
    "Purpose", "Credit Amount", "Value Savings/Stocks", "Length of current employment",
    "Instalment per cent", "Sex & Marital Status", "Guarantors", "Duration in Current address",
    "Most valuable available asset", "Age (years)", "Concurrent Credits", "Type of apartment",
    "No of Credits at this Bank", "Occupation", "No of dependents", "Telephone", "Foreign Worker",
]
CMC_COLUMNS = [
    "Wife age", "Wife education", "Husband education", "Number of children ever born",
    "Wife religion", "Wife now working?", "Husband occupation", "Standard-of-living index",
    "Media exposure",
]


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def fmt(v):
    return repr(float(v)).removesuffix(".0") if float(v).is_integer() else repr(float(v))


def wdbc_name(name):
    base = name.replace("mean ", "").replace(" error", "").replace("worst ", "")
    base = base.replace("concave points", "concave")
    suffix = "mean" if name.startswith("mean ") else "worst" if name.startswith("worst ") else "std"
    return f"{base} {suffix}"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--keel-wheel", required=True)
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(exist_ok=True)

    iris = datasets.load_iris()
    names = [n.replace(" (cm)", "") for n in iris.feature_names]
    write(out / "iris.csv", names + ["species"],
          [[fmt(v) for v in x] + [iris.target_names[y]] for x, y in zip(iris.data, iris.target)])

    bc = datasets.load_breast_cancer()
    write(out / "wdbc.csv", [wdbc_name(n) for n in bc.feature_names] + ["diagnosis"],
          [[fmt(v) for v in x] + ["B" if y == 1 else "M"] for x, y in zip(bc.data, bc.target)])

    wheel = zipfile.ZipFile(args.keel_wheel)
    raw = wheel.read("keel_ds/data/balanced/raw/german.dat").decode().strip().splitlines()
    rows = []
    for line in raw:
        cells = [c.strip() for c in line.split(",")]
        feats = []
        for i, c in enumerate(cells[:-1]):
            prefix = f"A{i + 1}"
            feats.append(c[len(prefix):] if c.startswith(prefix) else c)
        rows.append(feats + ["approved" if cells[-1] == "1" else "denied"])
    write(out / "german_credit.csv", GERMAN_COLUMNS + ["Creditability"], rows)

    raw = wheel.read("keel_ds/data/balanced/raw/contraceptive.dat").decode().strip().splitlines()
    labels = {"1": "No-use", "2": "Long-term", "3": "Short-term"}
    rows = [c[:-1] + [labels[c[-1]]] for c in (line.strip().split(",") for line in raw)]
    write(out / "contraceptive.csv", CMC_COLUMNS + ["Contraceptive method"], rows)


if __name__ == "__main__":
    main()
