"""Rerun the bundled measurement scenarios and print the comparison table.

Equivalent to ``timebin reproduce``; additionally repeats the runs over a
range of seeds to show the spread of each quantity.

    python scripts/reproduce_measurements.py --out runs/ --seeds 5
"""
import argparse

import numpy as np

from timebin.cli import reproduce


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="directory for the artifacts of the bundled-seed run")
    ap.add_argument("--seeds", type=int, default=0, help="extra runs with seeds 1..N")
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    rows = reproduce(args.out, max_workers=args.workers)
    for r in rows:
        print(r.format())
    if args.seeds:
        values = np.array([[r.value for r in reproduce(seed=s, max_workers=args.workers)]
                           for s in range(1, args.seeds + 1)])
        print(f"\nspread over {args.seeds} seeds")
        for r, col in zip(rows, values.T):
            print(f"{r.name:<24} mean {col.mean():10.4f}  std {col.std(ddof=1) if col.size > 1 else 0.0:8.4f}")


if __name__ == "__main__":
    main()
