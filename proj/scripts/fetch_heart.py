#!/usr/bin/env python3
"""Fetch the UCI Cleveland heart-disease data and write data/heart_cleveland.csv.

The processed Cleveland file has 303 rows, 13 numeric attributes plus the
0-4 target (`num`). Rows with missing cells are kept as-is ('?'); the CSV
loader drops them at load time. Requires network access to archive.ics.uci.edu.
"""
import csv
import io
import sys
import urllib.request

URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/heart-disease/processed.cleveland.data"
COLUMNS = [
    "age", "sex", "cp", "trestbps", "chol", "fbs", "restecg",
    "thalach", "exang", "oldpeak", "slope", "ca", "thal", "num",
]


def main(out_path: str = "data/heart_cleveland.csv") -> int:
    try:
        raw = urllib.request.urlopen(URL, timeout=30).read().decode("ascii")
    except Exception as exc:  # noqa: BLE001
        print(f"download failed: {exc}", file=sys.stderr)
        return 1
    rows = [r for r in csv.reader(io.StringIO(raw)) if r]
    if len(rows) != 303:
        print(f"unexpected row count {len(rows)} (wanted 303)", file=sys.stderr)
        return 1
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COLUMNS)
        w.writerows(rows)
    print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
