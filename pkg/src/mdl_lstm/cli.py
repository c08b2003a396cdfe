"""Command-line entry point: ``mdl-lstm <subcommand> ...``.

Exit codes: 0 success, 1 runtime or IO failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .codec import DEFAULT_MAX_DEN, description_length, encode_network, write_bitstream
from .golden import GoldenConfig, build_golden, memory_trace
from .grammar import Dataset, GrammarConfig, build_test, make_splits
from .lstm import LstmParams, decode_tokens, run_sequence
from .objectives import ObjectiveConfig, accuracy_report, loss_report, sequence_stats
from .surface import BIAS_MODES, GROUPINGS, explore, surface_from_sweep, sweep
from .trainer import (TrainConfig, expand_grid, grid_search, train, write_grid_csv,
                      write_history_csv)

log = logging.getLogger("mdl_lstm")

OUT_ENV = "MDL_LSTM_OUT"


class CliError(Exception):
    """Runtime failure reported on stderr with exit code 1."""


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config: dict, inputs: list[Path], outputs: list[Path],
                   started: float) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "seeds": {k: v for k, v in config.items() if "seed" in k},
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": {p.name: _digest(p) for p in outputs},
        "tool_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_clock_s": round(time.time() - started, 3),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
    }
    path = out / f"manifest_{command.replace(' ', '_')}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_net(path: str | None, hint: str = "golden build") -> LstmParams:
    if path is None:
        return build_golden()
    p = Path(path)
    if not p.exists():
        raise CliError(f"network file {p} not found; run `mdl-lstm {hint}` first")
    return LstmParams.load(p)


def _load_data(path: str, hint: str = "gen-data") -> Dataset:
    p = Path(path)
    if not p.exists():
        raise CliError(f"dataset file {p} not found; run `mdl-lstm {hint}` first")
    return Dataset.load(p)


def _splits(args) -> dict[str, Dataset]:
    if getattr(args, "train_data", None):
        out = {"train": _load_data(args.train_data)}
        if getattr(args, "val_data", None):
            out["validation"] = _load_data(args.val_data)
        out["test"] = build_test(1, args.test_max)
        return out
    return make_splits(GrammarConfig(args.p, args.data_seed), args.train_size, (1, args.test_max))


def _seed_pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated seeds, got {text!r}") from None
    return a, b


def _span(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi got {text!r}") from None
    return lo, hi


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _write_rows(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


# subcommands

def cmd_gen_data(args) -> int:
    started = time.time()
    out = _out_dir(args)
    cfg = GrammarConfig(args.p, args.seed)
    splits = make_splits(cfg, args.size, (1, args.test_max))
    files = []
    for name, ds in splits.items():
        path = out / f"{name}.txt"
        ds.save(path)
        files.append(path)
    info = {
        "seed": args.seed, "p": args.p, "size": args.size,
        "max_n": splits["train"].max_n,
        "counts": {k: len(v) for k, v in splits.items()},
    }
    data_manifest = out / "data.json"
    data_manifest.write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    files.append(data_manifest)
    write_manifest(out, "gen-data", vars_config(args), [], files, started)
    print(json.dumps(info, sort_keys=True))
    return 0


def vars_config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",) and not callable(v)}


def cmd_golden(args) -> int:
    started = time.time()
    cfg = GoldenConfig(args.p, args.large, args.epsilon)
    if args.action == "build":
        net = build_golden(cfg)
        path = Path(args.out or Path(os.environ.get(OUT_ENV, ".")) / "golden.json")
        path.parent.mkdir(parents=True, exist_ok=True)
        net.save(path)
        write_manifest(path.parent, "golden build", vars_config(args), [], [path], started)
        print(json.dumps({"network": str(path), "h_bits": description_length(net)}))
        return 0
    net = _load_net(args.net) if args.net else build_golden(cfg)
    text = args.string or "#" + "a" * args.n + "b" * args.n + "#"
    trace = memory_trace(net, text)
    rows = [[t, text[t], *c.tolist()] for t, c in enumerate(trace)]
    header = ["t", "input"] + [f"c{k}" for k in range(net.hidden_size)]
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_rows(path, header, rows)
        write_manifest(path.parent, "golden trace", vars_config(args), [], [path], started)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([[_fmt(v) for v in r] for r in rows])
    return 0


def cmd_encode(args) -> int:
    net = _load_net(args.net)
    bits = encode_network(net, args.max_den)
    result = {"hidden_size": net.hidden_size, "bits": len(bits), "max_den": args.max_den}
    if args.bits_out:
        path = Path(args.bits_out)
        path.parent.mkdir(parents=True, exist_ok=True)
        sidecar = write_bitstream(bits, path)
        result.update(bitstream=str(path), sidecar=str(sidecar))
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    net = _load_net(args.net)
    data = _load_data(args.data)
    cfg = ObjectiveConfig(args.objective, args.lam, args.max_den)
    stats = sequence_stats(net, data.ns)
    report = loss_report(net, data, cfg, stats).to_json()
    report["objective"] = cfg.label
    if np.any(data.ns >= 1):
        acc = accuracy_report(net, data, stats)
        report["det_accuracy"] = acc.per_position
        report["string_accuracy"] = acc.per_string
        report["first_failure_n"] = acc.first_failure_n
    print(json.dumps(report, sort_keys=True))
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        train_size=args.train_size, seed=args.seed, reg=args.reg,
        lam=args.lam if args.reg != "none" else 0.0, dropout=args.dropout,
        patience=args.patience or None, init=args.init, epochs=args.epochs,
        lr=args.lr, batch=args.batch or None, p=args.p,
    )


def _save_run(result, out: Path, stem: str) -> list[Path]:
    net_path = out / f"{stem}.json"
    result.params.save(net_path)
    hist_path = out / f"{stem}_history.csv"
    write_history_csv(result, hist_path)
    return [net_path, hist_path]


def cmd_train(args) -> int:
    started = time.time()
    out = _out_dir(args)
    cfg = _train_config(args)
    splits = make_splits(GrammarConfig(cfg.p, cfg.seed), cfg.train_size, (1, args.test_max))
    result = train(cfg, splits)
    files = _save_run(result, out, args.name)
    summary = {k: v for k, v in result.row().items()}
    summary_path = out / f"{args.name}_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")
    files.append(summary_path)
    write_manifest(out, "train", asdict(cfg), [], files, started)
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


def load_grid_spec(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"grid config {p} not found")
    spec = json.loads(p.read_text())
    if not isinstance(spec, dict) or not spec:
        raise CliError("grid config must be a non-empty JSON object of value lists")
    return {k: v if isinstance(v, list) else [v] for k, v in spec.items()}


def cmd_grid(args) -> int:
    started = time.time()
    out = _out_dir(args)
    spec = load_grid_spec(args.config)
    configs = expand_grid(spec)
    if args.dry_run:
        print(json.dumps({"configurations": len(configs)}))
        return 0
    results = grid_search(configs, jobs=args.jobs, test_range=(1, args.test_max))
    files = []
    runs = out / "runs"
    runs.mkdir(exist_ok=True)
    for r in results:
        if not r.error:
            files.extend(_save_run(r, runs, r.config.tag))
    summary = out / "grid_summary.csv"
    write_grid_csv(results, summary)
    files.append(summary)
    write_manifest(out, "grid", {"grid": spec, "jobs": args.jobs}, [Path(args.config)], files, started)
    best = results[0]
    print(json.dumps({"configurations": len(results), "best": best.row()}, sort_keys=True, default=str))
    return 0


def cmd_explore(args) -> int:
    started = time.time()
    out = _out_dir(args)
    net = _load_net(args.net)
    splits = _splits(args)
    cfg = ObjectiveConfig(args.objective, args.lam, args.max_den)
    surf = explore(net, cfg, splits["train"], args.seeds, args.grid, args.span,
                   test=splits["test"], grouping=args.grouping, bias_mode=args.bias_mode,
                   jobs=args.jobs)
    stem = f"surface_{cfg.kind}" + (f"_{args.lam:g}" if cfg.kind in ("l1", "l2") else "")
    stem += f"_s{args.seeds[0]}-{args.seeds[1]}"
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    surf.write_csv(csv_path)
    surf.write_summary(json_path)
    inputs = [Path(args.net)] if args.net else []
    write_manifest(out, "explore", vars_config(args), inputs, [csv_path, json_path], started)
    print(json.dumps(surf.summary(), sort_keys=True))
    return 0


TABLE1_OBJECTIVES = [ObjectiveConfig("ce")] + [
    ObjectiveConfig(k, lam) for k in ("l1", "l2") for lam in (0.1, 0.5, 1.0)
] + [ObjectiveConfig("mdl")]


def table1_rows(net: LstmParams, splits: dict[str, Dataset], pairs: list[tuple[int, int]],
                grid: int = 51, grouping: str = "row", bias_mode: str = "copy", jobs: int = 1) -> list[list]:
    """Loss and test accuracy at ``net`` for each objective, plus the neighborhood
    minimum over the given direction-seed pairs when any are given."""
    train_set, test = splits["train"], splits["test"]
    stats = sequence_stats(net, train_set.ns)
    acc = accuracy_report(net, test).per_position
    sweeps = [sweep(net, train_set, pair, grid, grouping=grouping, bias_mode=bias_mode, jobs=jobs)
              for pair in pairs]
    rows = []
    for cfg in TABLE1_OBJECTIVES:
        rep = loss_report(net, train_set, cfg, stats)
        row = [cfg.kind.upper() if cfg.kind != "ce" else "CE",
               cfg.lam if cfg.kind in ("l1", "l2") else "", rep.combined, acc]
        if pairs:
            best = None
            for sw, delta, eta in sweeps:
                surf = surface_from_sweep(sw, net, cfg, delta, eta, test, center_accuracy=acc)
                cand = (surf.min_loss, -surf.accuracy_at_min)
                best = cand if best is None or cand < best else best
            row += [best[0], -best[1]]
        rows.append(row)
    return rows


def cmd_report(args) -> int:
    started = time.time()
    out = _out_dir(args)
    kind = args.reproduce
    inputs = [Path(args.net)] if args.net else []
    if kind in ("table1", "fig2") and not args.net:
        raise CliError(f"report {kind} needs --net; run `mdl-lstm train` (or `golden build`) first")
    net = _load_net(args.net, hint="train")
    files: list[Path] = []
    if kind in ("table1-golden", "table1"):
        if kind == "table1-golden":
            net = build_golden()
        splits = _splits(args)
        pairs = [(2 * k + 1, 2 * k + 2) for k in range(args.pairs)]
        rows = table1_rows(net, splits, pairs, args.grid, jobs=args.jobs)
        header = ["loss", "lambda", "loss_at_net", "test_acc_at_net"]
        if pairs:
            header += ["neighborhood_min_loss", "test_acc_at_min"]
        files.append(_write_rows(out / f"{kind}.csv", header, rows))
    elif kind == "fig3":
        text = "#" + "a" * args.n + "b" * args.n + "#"
        dists = run_sequence(net, text[:-1])
        rows = [[t, text[t], *d.tolist()] for t, d in enumerate(dists)]
        files.append(_write_rows(out / f"fig3_n{args.n}.csv", ["t", "input", "p_#", "p_a", "p_b"], rows))
    elif kind == "fig4":
        text = "#" + "a" * args.n + "b" * args.n + "#"
        trace = memory_trace(net, text[:-1])
        rows = [[t, text[t], *c.tolist()] for t, c in enumerate(trace)]
        header = ["t", "input"] + [f"c{k}" for k in range(net.hidden_size)]
        files.append(_write_rows(out / f"fig4_n{args.n}.csv", header, rows))
    elif kind == "fig2":
        splits = _splits(args)
        summaries = []
        for k in range(max(args.pairs, 1)):
            pair = (2 * k + 1, 2 * k + 2)
            sw, delta, eta = sweep(net, splits["train"], pair, args.grid, jobs=args.jobs)
            for cfg in (ObjectiveConfig("l1", 0.1), ObjectiveConfig("l2", 0.1), ObjectiveConfig("mdl")):
                surf = surface_from_sweep(sw, net, cfg, delta, eta, splits["test"])
                stem = f"fig2_{cfg.kind}_s{pair[0]}-{pair[1]}"
                surf.write_csv(out / f"{stem}.csv")
                files.append(out / f"{stem}.csv")
                summaries.append(surf.summary())
        summary_path = out / "fig2_summary.json"
        summary_path.write_text(json.dumps(summaries, indent=2, sort_keys=True) + "\n")
        files.append(summary_path)
    write_manifest(out, f"report {kind}", vars_config(args), inputs, files, started)
    print(json.dumps({"outputs": [str(f) for f in files]}))
    return 0


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-data", help="training set file (default: sample one)")
    p.add_argument("--data-seed", type=int, default=100)
    p.add_argument("--train-size", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--test-max", type=int, default=1500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdl-lstm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample train/validation/test files")
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=100)
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--test-max", type=int, default=1500)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("golden", help="build the golden network or trace its memory")
    p.add_argument("action", choices=["build", "trace"])
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--large", type=float, default=2**7 - 1)
    p.add_argument("--epsilon", type=float, default=1 / (2**14 - 1))
    p.add_argument("--net", help="trace this network instead of the golden one")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--string", help="explicit input string for trace, e.g. '#aab'")
    p.add_argument("--out")
    p.set_defaults(func=cmd_golden)

    p = sub.add_parser("encode", help="MDL-encode a network")
    p.add_argument("--net", required=True)
    p.add_argument("--max-den", type=int, default=DEFAULT_MAX_DEN)
    p.add_argument("--bits-out", help="write the packed bitstream here (+ .bits sidecar)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="loss report of a network on a dataset")
    p.add_argument("--net", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--objective", choices=["ce", "l1", "l2", "mdl"], default="ce")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--max-den", type=int, default=DEFAULT_MAX_DEN)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train", help="train one network with backpropagation")
    p.add_argument("--train-size", type=int, default=1000)
    p.add_argument("--seed", type=int, default=100)
    p.add_argument("--reg", choices=["none", "l1", "l2"], default="none")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--patience", type=int, default=2, help="0 disables early stopping")
    p.add_argument("--init", choices=["uniform", "normal"], default="normal")
    p.add_argument("--epochs", type=int, default=20_000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=0, help="minibatch size, 0 = full batch")
    p.add_argument("--p", type=float, default=0.3)
    p.add_argument("--test-max", type=int, default=1500)
    p.add_argument("--name", default="trained")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="run a hyper-parameter grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--test-max", type=int, default=1500)
    p.add_argument("--dry-run", action="store_true", help="only count configurations")
    p.add_argument("--out")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("explore", help="2-D loss surface around a network")
    p.add_argument("--net", help="network JSON (default: golden)")
    p.add_argument("--objective", choices=["ce", "l1", "l2", "mdl"], default="mdl")
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--max-den", type=int, default=DEFAULT_MAX_DEN)
    p.add_argument("--seeds", type=_seed_pair, default=(1, 2))
    p.add_argument("--grid", type=int, default=51)
    p.add_argument("--span", type=_span, default=(-1.0, 1.0))
    p.add_argument("--grouping", choices=GROUPINGS, default="row")
    p.add_argument("--bias-mode", choices=BIAS_MODES, default="copy")
    p.add_argument("--jobs", type=int, default=1)
    _add_data_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("report", help="CSV data behind the tables and figures")
    p.add_argument("--reproduce", required=True, choices=["table1-golden", "table1", "fig2", "fig3", "fig4"])
    p.add_argument("--net", help="network JSON (default: golden)")
    p.add_argument("--n", type=int, default=73)
    p.add_argument("--pairs", type=int, default=0, help="direction-seed pairs for neighborhood minima")
    p.add_argument("--grid", type=int, default=51)
    p.add_argument("--jobs", type=int, default=1)
    _add_data_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, OSError, ValueError) as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
