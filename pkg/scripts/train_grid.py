"""Run a training grid from a JSON config and summarize the counting behavior
of every run (validation accuracy, first failing n against the training range).

    python scripts/train_grid.py configs/reduced_grid.json --out runs/grid --jobs 1
"""
import argparse
import sys
from pathlib import Path

from mdl_lstm.cli import load_grid_spec
from mdl_lstm.trainer import expand_grid, grid_search, write_grid_csv


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default="runs/grid")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--test-max", type=int, default=1500)
    args = ap.parse_args()

    configs = expand_grid(load_grid_spec(args.config))
    results = grid_search(configs, jobs=args.jobs, test_range=(1, args.test_max))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(results, out / "grid_summary.csv")
    for r in results:
        n_star = r.first_failure_n
        counts = n_star is not None and n_star > r.max_train_n
        print(f"{r.config.tag:60s} val_loss {r.val_loss_best:.4f} val_acc {r.val_det_acc:.4f} "
              f"test_acc {r.test_det_acc:.4f} n* {n_star} max_train_n {r.max_train_n} "
              f"{'generalizes' if counts else ''}{r.error}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
