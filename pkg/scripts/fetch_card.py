"""Produce ``data/card.csv`` for the Card (1995) schooling example.

The data are not shipped with this repository. This recipe reads them from
the ``wooldridge`` package (``pip install wooldridge``) or from a local copy
of ``card.csv`` / ``card.csv.bz2`` and keeps the columns used by the example.

    python3 scripts/fetch_card.py                 # from the wooldridge package
    python3 scripts/fetch_card.py --source card.csv.bz2
"""

from __future__ import annotations

import argparse
import bz2
import csv
import io
import sys
from importlib import resources
from pathlib import Path

COLUMNS = [
    "id", "lwage", "educ", "nearc2", "nearc4", "exper", "expersq", "black",
    "south", "smsa", "smsa66",
    "reg661", "reg662", "reg663", "reg664", "reg665", "reg666", "reg667", "reg668", "reg669",
]


def _read_text(path: Path) -> str:
    raw = path.read_bytes()
    return bz2.decompress(raw).decode("utf-8") if path.suffix == ".bz2" else raw.decode("utf-8")


def _package_copy() -> str:
    try:
        ref = resources.files("wooldridge") / "datasets" / "card.csv.bz2"
    except ModuleNotFoundError:
        sys.exit("wooldridge is not installed; pip install wooldridge or pass --source")
    return bz2.decompress(ref.read_bytes()).decode("utf-8")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--source", type=Path, help="local card.csv or card.csv.bz2")
    p.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data" / "card.csv")
    args = p.parse_args(argv)
    text = _read_text(args.source) if args.source else _package_copy()
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in COLUMNS if c not in reader.fieldnames]
    if missing:
        sys.exit(f"source lacks columns: {missing}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with args.out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in reader:
            w.writerow([row[c] for c in COLUMNS])
            n += 1
    print(f"wrote {n} rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
