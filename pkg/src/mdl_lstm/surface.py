"""Two-dimensional loss slices ``f(a, b) = L(theta + a*delta + b*eta)`` around a
network, with per-neuron (filter) normalization of the random directions.

The default normalization treats each parameter tensor the way the usual
loss-landscape tooling does for a framework LSTM: matrix rows are rescaled one
by one and 1-D bias tensors take the center's own values as their direction.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import DEFAULT_MAX_DEN, description_length
from .grammar import Dataset
from .lstm import (GATES, HIDDEN_BIASES, HIDDEN_MATS, INPUT_BIASES, INPUT_MATS, LstmParams,
                   block_slices, flatten, param_shapes, unflatten)
from .objectives import (ObjectiveConfig, accuracy_report, ce_mean, data_cost_bits, l1, l2,
                         sequence_stats)


GROUPINGS = ("row", "neuron")
BIAS_MODES = ("copy", "zero", "group")


def neuron_groups(hidden_size: int, grouping: str = "row", include_bias: bool = False) -> list[np.ndarray]:
    """Flat indices of the weight sets that are normalized together.

    ``row``: every row of every weight matrix on its own (one neuron's incoming
    input weights, or its incoming recurrent weights). ``neuron``: a gate unit's
    input row and recurrent row together, optionally with its two bias entries;
    an output unit's W_out row, optionally with its b_out entry.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    if grouping == "row" and include_bias:
        raise ValueError("row grouping keeps biases out of the groups")
    sl = block_slices(hidden_size)
    shapes = param_shapes(hidden_size)

    def row(name, k):
        ncol = shapes[name][1]
        start = sl[name].start + k * ncol
        return np.arange(start, start + ncol)

    def entry(name, k):
        return np.array([sl[name].start + k])

    groups = []
    if grouping == "row":
        for name in INPUT_MATS + HIDDEN_MATS + ("W_out",):
            groups.extend(row(name, k) for k in range(shapes[name][0]))
        return groups
    for g in GATES:
        for k in range(hidden_size):
            parts = [row(f"W_i{g}", k), row(f"W_h{g}", k)]
            if include_bias:
                parts += [entry(f"b_i{g}", k), entry(f"b_h{g}", k)]
            groups.append(np.concatenate(parts))
    for j in range(shapes["W_out"][0]):
        parts = [row("W_out", j)]
        if include_bias:
            parts.append(entry("b_out", j))
        groups.append(np.concatenate(parts))
    return groups


def bias_indices(hidden_size: int) -> np.ndarray:
    sl = block_slices(hidden_size)
    return np.concatenate([np.arange(sl[k].start, sl[k].stop)
                           for k in INPUT_BIASES + HIDDEN_BIASES + ("b_out",)])


def filter_normalize(direction: np.ndarray, center: np.ndarray, hidden_size: int,
                     grouping: str = "row", bias_mode: str = "copy") -> np.ndarray:
    """Rescale each group of ``direction`` to the norm of the same group in ``center``.

    Groups whose center norm is zero become zero. Bias entries are rescaled with
    their neuron (``group``, neuron grouping only), set to zero (``zero``) or set
    to the center's own biases (``copy``).
    """
    if bias_mode not in BIAS_MODES:
        raise ValueError(f"bias_mode must be one of {BIAS_MODES}")
    direction = np.asarray(direction, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if direction.shape != center.shape:
        raise ValueError(f"direction shape {direction.shape} != center shape {center.shape}")
    in_group = bias_mode == "group"
    if in_group and grouping != "neuron":
        raise ValueError("bias_mode='group' needs grouping='neuron'")
    out = np.zeros_like(direction)
    for idx in neuron_groups(hidden_size, grouping, in_group):
        c_norm = np.linalg.norm(center[idx])
        d_norm = np.linalg.norm(direction[idx])
        if c_norm > 0 and d_norm > 0:
            out[idx] = direction[idx] * (c_norm / d_norm)
    if bias_mode == "copy":
        bi = bias_indices(hidden_size)
        out[bi] = center[bi]
    return out


@dataclass(frozen=True)
class Direction:
    delta: np.ndarray
    seed: int
    normalized: bool = True


def sample_direction(center: LstmParams, seed: int, grouping: str = "row",
                     bias_mode: str = "copy") -> Direction:
    theta = flatten(center)
    raw = np.random.default_rng(seed).standard_normal(theta.size)
    return Direction(filter_normalize(raw, theta, center.hidden_size, grouping, bias_mode), seed)


def grid_axis(grid: int = 51, span: tuple[float, float] = (-1.0, 1.0)) -> np.ndarray:
    """``grid`` equally spaced values over ``span``; the middle one is exactly the midpoint."""
    if grid < 3 or grid % 2 == 0:
        raise ValueError("grid must be an odd integer >= 3")
    lo, hi = span
    half = grid // 2
    return (lo + hi) / 2 + (np.arange(grid) - half) / half * ((hi - lo) / 2)


@dataclass
class Sweep:
    """Objective-independent components on every grid cell."""

    alphas: np.ndarray
    betas: np.ndarray
    ce: np.ndarray
    data_bits: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    h_bits: np.ndarray
    seeds: tuple[int, int]
    normalization: str = "row/copy"

    def values(self, cfg: ObjectiveConfig) -> np.ndarray:
        if cfg.kind == "ce":
            return self.ce.copy()
        if cfg.kind == "l1":
            return self.ce + cfg.lam * self.l1
        if cfg.kind == "l2":
            return self.ce + cfg.lam * self.l2
        return self.data_bits + self.h_bits


@dataclass
class Surface:
    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray
    h_bits: np.ndarray | None
    center: np.ndarray
    hidden_size: int
    objective: ObjectiveConfig
    seeds: tuple[int, int]
    min_cell: tuple[int, int]
    accuracy_at_min: float = float("nan")
    accuracy_at_center: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def center_cell(self) -> tuple[int, int]:
        return (self.alphas.size // 2, self.betas.size // 2)

    @property
    def center_loss(self) -> float:
        return float(self.values[self.center_cell])

    @property
    def min_loss(self) -> float:
        return float(self.values[self.min_cell])

    def params_at(self, cell: tuple[int, int], delta: np.ndarray, eta: np.ndarray) -> LstmParams:
        i, j = cell
        return unflatten(self.center + self.alphas[i] * delta + self.betas[j] * eta, self.hidden_size)

    def summary(self) -> dict:
        i, j = self.min_cell
        return {
            "objective": self.objective.label,
            "kind": self.objective.kind,
            "lambda": self.objective.lam,
            "seeds": list(self.seeds),
            "grid": int(self.alphas.size),
            "span": [float(self.alphas[0]), float(self.alphas[-1])],
            "min_cell": [int(i), int(j)],
            "min_alpha": float(self.alphas[i]),
            "min_beta": float(self.betas[j]),
            "min_loss": self.min_loss,
            "center_loss": self.center_loss,
            "min_at_center": self.min_cell == self.center_cell,
            "accuracy_at_min": self.accuracy_at_min,
            "accuracy_at_center": self.accuracy_at_center,
            **self.extra,
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["alpha", "beta", "loss"] + (["h_bits"] if self.h_bits is not None else [])
            writer.writerow(header)
            for i, a in enumerate(self.alphas.tolist()):
                for j, b in enumerate(self.betas.tolist()):
                    row = [repr(a), repr(b), repr(float(self.values[i, j]))]
                    if self.h_bits is not None:
                        row.append(int(self.h_bits[i, j]))
                    writer.writerow(row)

    def write_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _cell(theta: np.ndarray, hidden_size: int, train: Dataset, max_den: int, need_bits: bool):
    try:
        params = unflatten(theta, hidden_size)
    except ValueError:
        return math.inf, math.inf, math.inf, math.inf, -1
    stats = sequence_stats(params, train.ns, need_correct=False)
    ce = ce_mean(params, train, stats)
    bits = data_cost_bits(params, train, stats)
    if not math.isfinite(ce):
        ce, bits = math.inf, math.inf
    h_bits = description_length(params, max_den) if need_bits else -1
    return ce, bits, l1(params), l2(params), h_bits


def _row(args):
    theta, a, delta, eta, betas, hidden_size, train, max_den, need_bits = args
    return [_cell(theta + a * delta + b * eta, hidden_size, train, max_den, need_bits) for b in betas]


def sweep(center: LstmParams, train: Dataset, seeds: tuple[int, int], grid: int = 51,
          span: tuple[float, float] = (-1.0, 1.0), max_den: int = DEFAULT_MAX_DEN,
          need_bits: bool = True, grouping: str = "row", bias_mode: str = "copy", jobs: int = 1):
    """Evaluate every component of every objective on the grid.

    Rows of the grid go to ``jobs`` worker processes; the result does not depend
    on ``jobs``. Returns ``(Sweep, delta, eta)``.
    """
    theta = flatten(center)
    delta = sample_direction(center, seeds[0], grouping, bias_mode).delta
    eta = sample_direction(center, seeds[1], grouping, bias_mode).delta
    alphas = grid_axis(grid, span)
    betas = grid_axis(grid, span)
    tasks = [(theta, a, delta, eta, betas, center.hidden_size, train, max_den, need_bits) for a in alphas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_row, tasks))
    else:
        rows = [_row(t) for t in tasks]
    cols = list(zip(*(cell for row in rows for cell in row)))
    ce, bits, L1, L2 = (np.array(c, dtype=np.float64).reshape(grid, grid) for c in cols[:4])
    hb = np.array(cols[4], dtype=np.int64).reshape(grid, grid)
    sw = Sweep(alphas, betas, ce, bits, L1, L2, hb, tuple(seeds), f"{grouping}/{bias_mode}")
    return sw, delta, eta


def surface_from_sweep(sw: Sweep, center: LstmParams, cfg: ObjectiveConfig, delta, eta,
                       test: Dataset | None = None, center_accuracy: float | None = None) -> Surface:
    values = sw.values(cfg)
    values[~np.isfinite(values)] = math.inf
    flat_min = int(np.argmin(values))
    min_cell = tuple(int(v) for v in np.unravel_index(flat_min, values.shape))
    surf = Surface(
        alphas=sw.alphas, betas=sw.betas, values=values,
        h_bits=sw.h_bits.copy() if cfg.kind == "mdl" else None,
        center=flatten(center), hidden_size=center.hidden_size, objective=cfg,
        seeds=sw.seeds, min_cell=min_cell, extra={"normalization": sw.normalization},
    )
    if test is not None:
        if center_accuracy is None:
            center_accuracy = accuracy_report(center, test).per_position
        surf.accuracy_at_center = center_accuracy
        if min_cell == surf.center_cell:
            surf.accuracy_at_min = center_accuracy
        else:
            surf.accuracy_at_min = accuracy_report(surf.params_at(min_cell, delta, eta), test).per_position
    if cfg.kind == "mdl":
        surf.extra["h_bits_jaggedness"] = jaggedness(sw.h_bits)
    return surf


def explore(center: LstmParams, objective: ObjectiveConfig, train: Dataset,
            seeds: tuple[int, int], grid: int = 51, span: tuple[float, float] = (-1.0, 1.0),
            test: Dataset | None = None, grouping: str = "row", bias_mode: str = "copy",
            jobs: int = 1) -> Surface:
    sw, delta, eta = sweep(center, train, seeds, grid, span, objective.max_den,
                           need_bits=objective.kind == "mdl", grouping=grouping, bias_mode=bias_mode,
                           jobs=jobs)
    return surface_from_sweep(sw, center, objective, delta, eta, test)


def jaggedness(h_bits: np.ndarray) -> dict:
    """Statistics of |H| differences between horizontally/vertically adjacent cells."""
    diffs = np.concatenate([np.diff(h_bits, axis=0).ravel(), np.diff(h_bits, axis=1).ravel()])
    return {
        "adjacent_pairs": int(diffs.size),
        "nonzero_fraction": float(np.mean(diffs != 0)),
        "mean_abs_diff": float(np.mean(np.abs(diffs))),
    }
