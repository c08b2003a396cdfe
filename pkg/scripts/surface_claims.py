"""Check the qualitative surface claims around the golden net over several
direction-seed pairs and write one summary row per pair and objective.

    python scripts/surface_claims.py --pairs 5 --out runs/surfaces
"""
import argparse
import csv
import json
from pathlib import Path

from mdl_lstm.golden import build_golden
from mdl_lstm.grammar import GrammarConfig, make_splits
from mdl_lstm.objectives import ObjectiveConfig
from mdl_lstm.surface import BIAS_MODES, GROUPINGS, surface_from_sweep, sweep

OBJECTIVES = (ObjectiveConfig("mdl"), ObjectiveConfig("l1", 0.1), ObjectiveConfig("l2", 0.1))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=5)
    ap.add_argument("--grid", type=int, default=51)
    ap.add_argument("--span", type=float, default=1.0)
    ap.add_argument("--data-seed", type=int, default=100)
    ap.add_argument("--grouping", choices=GROUPINGS, default="row")
    ap.add_argument("--bias-mode", choices=BIAS_MODES, default="copy")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/surfaces")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    golden = build_golden()
    splits = make_splits(GrammarConfig(0.3, args.data_seed), 1000, (1, 1500))
    rows = []
    for k in range(args.pairs):
        pair = (2 * k + 1, 2 * k + 2)
        sw, delta, eta = sweep(golden, splits["train"], pair, args.grid, (-args.span, args.span),
                               grouping=args.grouping, bias_mode=args.bias_mode, jobs=args.jobs)
        for cfg in OBJECTIVES:
            s = surface_from_sweep(sw, golden, cfg, delta, eta, splits["test"], center_accuracy=1.0)
            summary = s.summary()
            rows.append({
                "pair": f"{pair[0]}-{pair[1]}", "objective": cfg.label,
                "min_at_center": summary["min_at_center"], "min_loss": summary["min_loss"],
                "center_loss": summary["center_loss"], "accuracy_at_min": summary["accuracy_at_min"],
                "h_bits_nonzero_fraction": summary.get("h_bits_jaggedness", {}).get("nonzero_fraction", ""),
            })
            print(json.dumps(rows[-1]))
    with open(out / "surface_claims.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


if __name__ == "__main__":
    main()
