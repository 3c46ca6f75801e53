#!/usr/bin/env python3
"""Convert raw UCI benchmark files into the CSVs the test suite expects.

The repository does not ship benchmark data.  Download the raw files from
the UCI Machine Learning Repository and run this script on them:

  mushroom (agaricus-lepiota.data):
    https://archive.ics.uci.edu/ml/machine-learning-databases/mushroom/
    python scripts/prepare_datasets.py mushroom agaricus-lepiota.data

  heart disease, Cleveland (processed.cleveland.data):
    https://archive.ics.uci.edu/ml/machine-learning-databases/heart-disease/
    python scripts/prepare_datasets.py heart processed.cleveland.data

Outputs land in tests/data/ by default (mushroom.csv, heart_cleveland.csv),
where the acceptance tests look for them; point --output elsewhere to use
the CSVs with the command line tools directly.

Preparation choices:

* mushroom: all 8124 rows kept verbatim, single-letter categories included;
  the one column with unknowns (stalk-root, 2480 cells of "?") is left
  as-is, since the loader can treat "?" as a category of its own.  The
  class column becomes edible/poisonous.
* heart: Cleveland file only.  The four rows with ca = "?" are dropped,
  leaving 299 samples.  The thal column's numeric codes are replaced with
  their codebook names (3 normal, 6 fixed-defect, 7 reversible-defect) so
  its two remaining "?" cells survive as a category instead of forcing the
  rows out.  The 0-4 disease score is binarized: 0 is absent, anything
  greater is present.
"""

import argparse
import csv
import sys
from pathlib import Path

MUSHROOM_COLUMNS = [
    "class", "cap-shape", "cap-surface", "cap-color", "bruises", "odor",
    "gill-attachment", "gill-spacing", "gill-size", "gill-color",
    "stalk-shape", "stalk-root", "stalk-surface-above-ring",
    "stalk-surface-below-ring", "stalk-color-above-ring",
    "stalk-color-below-ring", "veil-type", "veil-color", "ring-number",
    "ring-type", "spore-print-color", "population", "habitat",
]

HEART_COLUMNS = [
    "age", "sex", "cp", "trestbps", "chol", "fbs", "restecg", "thalach",
    "exang", "oldpeak", "slope", "ca", "thal", "disease",
]

THAL_NAMES = {"3.0": "normal", "6.0": "fixed-defect", "7.0": "reversible-defect"}


def read_raw(path):
    with open(path, newline="") as fh:
        return [[cell.strip() for cell in row]
                for row in csv.reader(fh) if any(cell.strip() for cell in row)]


def prepare_mushroom(raw_path, out_path):
    rows = read_raw(raw_path)
    width = len(MUSHROOM_COLUMNS)
    bad = [r for r in rows if len(r) != width]
    if bad:
        sys.exit(f"error: expected {width} fields per row, found {len(bad[0])}")
    label_map = {"e": "edible", "p": "poisonous"}
    out = []
    for r in rows:
        if r[0] not in label_map:
            sys.exit(f"error: unknown class code {r[0]!r}")
        out.append([label_map[r[0]]] + r[1:])
    write_csv(out_path, MUSHROOM_COLUMNS, out)
    print(f"mushroom: {len(out)} rows -> {out_path}")
    if len(out) != 8124:
        print(f"warning: expected 8124 rows, got {len(out)}", file=sys.stderr)


def prepare_heart(raw_path, out_path):
    rows = read_raw(raw_path)
    width = len(HEART_COLUMNS)
    bad = [r for r in rows if len(r) != width]
    if bad:
        sys.exit(f"error: expected {width} fields per row, found {len(bad[0])}")
    ca, thal, score = width - 3, width - 2, width - 1
    dropped = 0
    out = []
    for r in rows:
        if r[ca] == "?":
            dropped += 1
            continue
        r = list(r)
        r[thal] = THAL_NAMES.get(r[thal], r[thal])
        r[score] = "absent" if float(r[score]) == 0 else "present"
        out.append(r)
    write_csv(out_path, HEART_COLUMNS, out)
    print(f"heart: {len(out)} rows ({dropped} dropped for ca = ?) -> {out_path}")
    if len(out) != 299:
        print(f"warning: expected 299 rows, got {len(out)}", file=sys.stderr)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


DEFAULTS = {
    "mushroom": ("tests/data/mushroom.csv", prepare_mushroom),
    "heart": ("tests/data/heart_cleveland.csv", prepare_heart),
}


def main():
    ap = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("dataset", choices=sorted(DEFAULTS))
    ap.add_argument("raw", help="path to the downloaded UCI file")
    ap.add_argument("--output", default=None,
                    help="output CSV (default: the path the tests expect)")
    args = ap.parse_args()
    default_out, fn = DEFAULTS[args.dataset]
    out = args.output or Path(__file__).resolve().parent.parent / default_out
    if not Path(args.raw).is_file():
        sys.exit(f"error: {args.raw} not found")
    fn(args.raw, out)


if __name__ == "__main__":
    main()
