"""Golden-network tables and figure data: Table-1-style row, output probabilities,
memory trace and the three 2-D surfaces.

    python scripts/reproduce_golden.py --out runs/golden --pairs 5
"""
import argparse
import sys

from mdl_lstm.cli import run


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/golden")
    ap.add_argument("--pairs", type=int, default=5)
    ap.add_argument("--grid", type=int, default=51)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    common = ["--out", args.out]
    steps = [
        ["golden", "build", "--out", f"{args.out}/golden.json"],
        ["golden", "trace", "--n", "5", "--out", f"{args.out}/trace_n5.csv"],
        ["report", "--reproduce", "fig3", "--n", "73", *common],
        ["report", "--reproduce", "fig4", "--n", "73", *common],
        ["report", "--reproduce", "table1-golden", "--pairs", str(args.pairs), "--grid", str(args.grid),
         "--jobs", str(args.jobs), *common],
        ["report", "--reproduce", "fig2", "--net", f"{args.out}/golden.json", "--pairs", str(args.pairs),
         "--grid", str(args.grid), "--jobs", str(args.jobs), *common],
    ]
    for argv in steps:
        print("mdl-lstm", " ".join(argv), file=sys.stderr)
        code = run(argv)
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
