#!/usr/bin/env python3
"""
Summarise a `triad-da calibrate` output directory.

Prints the best rows of score_summary.csv and where a reference noise vector
(by default b = [0.05, 0.025, 0.01]) ranks in the sweep.
"""

import argparse
import csv
import math
import os
import sys
from typing import Dict, List

REFERENCE_B = (0.05, 0.025, 0.01)


def load_summary(out_dir: str) -> List[Dict[str, str]]:
    """Read score_summary.csv rows sorted by rank."""
    path = os.path.join(out_dir, "score_summary.csv")
    with open(path, "r", newline="") as f:
        rows = list(csv.DictReader(f))
    return sorted(rows, key=lambda r: int(r["rank"]))


def find_rank(rows: List[Dict[str, str]], b) -> int:
    for row in rows:
        if all(math.isclose(float(row[f"b_{m}"]), v, abs_tol=1e-12) for m, v in zip("kpq", b)):
            return int(row["rank"])
    return -1


def main() -> int:
    parser = argparse.ArgumentParser(description="Summarise a calibration sweep")
    parser.add_argument("out_dir", help="Output directory of triad-da calibrate")
    parser.add_argument("-n", "--top", type=int, default=5, help="Rows to print")
    parser.add_argument("--reference", type=str, default=",".join(str(v) for v in REFERENCE_B),
                        help="Reference noise vector b_k,b_p,b_q")
    args = parser.parse_args()

    try:
        rows = load_summary(args.out_dir)
    except (FileNotFoundError, KeyError, ValueError) as e:
        print(f"Error reading sweep: {e}", file=sys.stderr)
        return 1
    if not rows:
        print("Empty sweep", file=sys.stderr)
        return 1

    score_columns = [c for c in rows[0] if c.startswith("crps_")]
    print("rank  " + "  ".join(f"{c:<9}" for c in ("b_k", "b_p", "b_q")) + "  " + "  ".join(score_columns))
    for row in rows[:args.top]:
        cells = "  ".join(f"{float(row[c]):<9g}" for c in ("b_k", "b_p", "b_q"))
        scores = "  ".join(f"{float(row[c]):.5f}" for c in score_columns)
        print(f"{int(row['rank']):>4}  {cells}  {scores}")

    reference = tuple(float(v) for v in args.reference.split(","))
    rank = find_rank(rows, reference)
    quartile = max(1, len(rows) // 4)
    if rank < 0:
        print(f"Reference b = {list(reference)} is not part of the sweep")
    else:
        where = "inside" if rank <= quartile else "outside"
        print(f"Reference b = {list(reference)} ranks {rank} of {len(rows)} ({where} the top quartile)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
