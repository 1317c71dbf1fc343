#!/usr/bin/env python3
"""Convert the raw UCI / ProPublica files into comma-separated CSVs with a
header row, which is the only input format the `fairsynth ingest` loader
accepts.

The raw files are the ones redistributed inside the `responsibly` wheel
(`pip download --no-deps responsibly==0.1.2`). No value is recoded here:
binning, merges, filters and derived columns all live in
configs/<dataset>.discretization.json.

usage: prepare_datasets.py <responsibly-wheel-or-extracted-dir> <out-dir>
"""
import csv
import io
import os
import sys
import zipfile

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]

GERMAN_COLUMNS = [
    "checking-account", "duration", "credit-history", "purpose",
    "credit-amount", "savings-account", "employment-since",
    "installment-rate", "personal-status", "other-debtors",
    "residence-since", "property", "age", "other-installment-plans",
    "housing", "existing-credits", "job", "people-liable", "telephone",
    "foreign-worker", "class-label",
]


def opener(src):
    if os.path.isdir(src):
        return lambda rel: open(os.path.join(src, rel), "rb").read()
    zf = zipfile.ZipFile(src)
    return lambda rel: zf.read(rel)


def adult(read, out):
    with open(os.path.join(out, "adult.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ADULT_COLUMNS)
        for name in ("adult.data", "adult.test"):
            text = read(f"responsibly/dataset/adult/{name}").decode()
            for line in text.splitlines():
                if not line.strip() or line.startswith("|"):
                    continue
                cells = [c.strip() for c in line.split(",")]
                # '?' is the UCI null marker
                w.writerow(["" if c == "?" else c for c in cells])


def compas(read, out):
    raw = read("responsibly/dataset/compas/compas-scores-two-years.csv")
    with open(os.path.join(out, "compas.csv"), "wb") as fh:
        fh.write(raw)


def german(read, out):
    text = read("responsibly/dataset/german/german.data").decode()
    with open(os.path.join(out, "german.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GERMAN_COLUMNS)
        for line in text.splitlines():
            if line.strip():
                w.writerow(line.split())


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    read = opener(sys.argv[1])
    out = sys.argv[2]
    os.makedirs(out, exist_ok=True)
    adult(read, out)
    compas(read, out)
    german(read, out)


if __name__ == "__main__":
    main()
