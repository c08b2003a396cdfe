"""Losses and metrics: cross-entropy, L1/L2, MDL score, deterministic accuracy."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .codec import DEFAULT_MAX_DEN, description_length
from .grammar import Dataset
from .lstm import A, B, HASH, LstmParams, flatten, forward_batch

KINDS = ("ce", "l1", "l2", "mdl")


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "ce"
    lam: float = 0.0
    max_den: int = DEFAULT_MAX_DEN

    def __post_init__(self):
        kind = self.kind.lower().replace("ce+", "")
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise ValueError(f"unknown objective {self.kind!r}; expected one of {KINDS}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")

    @property
    def label(self) -> str:
        if self.kind == "ce":
            return "CE"
        if self.kind == "mdl":
            return "MDL"
        return f"CE+{self.kind.upper()}(lambda={self.lam:g})"


@dataclass(frozen=True)
class LossReport:
    ce_mean_nats: float
    reg_value: float
    combined: float
    data_cost_bits: float
    h_bits: int
    mdl_total: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SequenceStats:
    """Per distinct-n results of one batched forward pass."""

    ns: np.ndarray
    nll: np.ndarray       # summed over the 2n+1 targets, nats
    correct: np.ndarray   # correct predictions at the n deterministic positions


def _padded_inputs(ns: np.ndarray) -> np.ndarray:
    """Input rows ``# a^n b^n`` (the final '#' is only a target), padded with '#'."""
    T = 2 * int(ns.max()) + 1
    pos = np.arange(T)
    n = ns[:, None]
    out = np.full((ns.size, T), HASH, dtype=np.int64)
    out[(pos >= 1) & (pos <= n)] = A
    out[(pos > n) & (pos <= 2 * n)] = B
    return out


def _target_matrix(ns: np.ndarray) -> np.ndarray:
    T = 2 * int(ns.max()) + 1
    t = np.arange(T)[None, :]
    n = ns[:, None]
    return np.where(t < n, A, np.where(t < 2 * n, B, HASH)).astype(np.int64)


def sequence_stats(params: LstmParams, ns, need_correct: bool = True) -> SequenceStats:
    """Run every distinct ``#a^nb^n#`` once; returns per-string NLL and hit counts."""
    ns = np.unique(np.asarray(ns, dtype=np.int64))
    order = np.argsort(-ns, kind="stable")
    sorted_ns = ns[order]
    inputs = _padded_inputs(sorted_ns)
    targets = _target_matrix(sorted_ns)
    lengths = 2 * sorted_ns + 1
    rows = np.arange(ns.size)
    first_measured = int(sorted_ns[sorted_ns >= 1].min()) + 1 if np.any(sorted_ns >= 1) else None
    nll = np.zeros(ns.size)
    correct = np.zeros(ns.size, dtype=np.int64)
    for t, k, logp in forward_batch(params, inputs, lengths):
        tgt = targets[:k, t]
        lp_t = logp[rows[:k], tgt]
        nll[:k] -= lp_t
        if not need_correct or first_measured is None or t < first_measured:
            continue
        # deterministic span: inputs b_1..b_n (positions n+1..2n); ties count as wrong
        n_act = sorted_ns[:k]
        measured = (t > n_act) & (n_act >= 1)
        others = logp.copy()
        others[rows[:k], tgt] = -np.inf
        hit = lp_t > others.max(axis=1)
        correct[:k] += measured & hit
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    return SequenceStats(ns, nll[inv], correct[inv])


def _lookup(stats: SequenceStats, data: Dataset):
    uniq, mass = data.grouped()
    idx = np.searchsorted(stats.ns, uniq)
    return uniq, mass, stats.nll[idx], stats.correct[idx]


def ce_mean(params: LstmParams, data: Dataset, stats: SequenceStats | None = None) -> float:
    """Mean negative log-likelihood per predicted token, in nats.

    Uniform data pools every target of every string; weighted data uses the
    weights as sample probabilities, i.e. sum(w * nll) / sum(w * n_targets).
    """
    stats = stats or sequence_stats(params, data.ns, need_correct=False)
    uniq, mass, nll, _ = _lookup(stats, data)
    with np.errstate(invalid="ignore"):
        total = math.fsum(mass * nll)
    return total / math.fsum(mass * (2 * uniq + 1))


def data_cost_bits(params: LstmParams, data: Dataset, stats: SequenceStats | None = None) -> float:
    """|D:H|: summed code length of every target symbol, in bits.

    For weighted data this is ``len(data) * sum(w * nll)``, the expectation of the
    uniform sum under the given sample law.
    """
    stats = stats or sequence_stats(params, data.ns)
    uniq, mass, nll, _ = _lookup(stats, data)
    scale = 1.0 if data.weights is None else float(len(data))
    return scale * math.fsum(mass * nll) / math.log(2)


def l1(params: LstmParams) -> float:
    return math.fsum(np.abs(flatten(params)))


def l2(params: LstmParams) -> float:
    return math.fsum(flatten(params) ** 2)


def mdl_score(params: LstmParams, data: Dataset, max_den: int = DEFAULT_MAX_DEN,
              stats: SequenceStats | None = None) -> LossReport:
    stats = stats or sequence_stats(params, data.ns)
    bits = data_cost_bits(params, data, stats)
    h_bits = description_length(params, max_den)
    return LossReport(
        ce_mean_nats=ce_mean(params, data, stats),
        reg_value=float(h_bits),
        combined=bits + h_bits,
        data_cost_bits=bits,
        h_bits=h_bits,
        mdl_total=bits + h_bits,
    )


def loss_report(params: LstmParams, data: Dataset, cfg: ObjectiveConfig,
                stats: SequenceStats | None = None) -> LossReport:
    """Every component for one objective; ``combined`` is the value minimized."""
    stats = stats or sequence_stats(params, data.ns)
    if cfg.kind == "mdl":
        return mdl_score(params, data, cfg.max_den, stats)
    ce = ce_mean(params, data, stats)
    reg = {"ce": 0.0, "l1": l1, "l2": l2}[cfg.kind]
    reg_value = reg(params) if callable(reg) else reg
    bits = data_cost_bits(params, data, stats)
    h_bits = description_length(params, cfg.max_den)
    return LossReport(
        ce_mean_nats=ce,
        reg_value=reg_value,
        combined=ce + cfg.lam * reg_value if cfg.kind != "ce" else ce,
        data_cost_bits=bits,
        h_bits=h_bits,
        mdl_total=bits + h_bits,
    )


def combined_loss(params: LstmParams, data: Dataset, cfg: ObjectiveConfig,
                  stats: SequenceStats | None = None) -> float:
    stats = stats or sequence_stats(params, data.ns)
    if cfg.kind == "mdl":
        return mdl_score(params, data, cfg.max_den, stats).mdl_total
    ce = ce_mean(params, data, stats)
    if cfg.kind == "ce":
        return ce
    return ce + cfg.lam * (l1(params) if cfg.kind == "l1" else l2(params))


@dataclass(frozen=True)
class AccuracyReport:
    per_position: float
    per_string: float
    first_failure_n: int | None
    positions: int

    def to_json(self) -> dict:
        return asdict(self)


def accuracy_report(params: LstmParams, data: Dataset,
                    stats: SequenceStats | None = None) -> AccuracyReport:
    ns = data.ns[data.ns >= 1]
    if ns.size == 0:
        raise ValueError("no sample with n >= 1: nothing deterministic to measure")
    stats = stats or sequence_stats(params, ns)
    idx = np.searchsorted(stats.ns, ns)
    correct = stats.correct[idx]
    accepted = correct == ns
    failed = ns[~accepted]
    return AccuracyReport(
        per_position=int(correct.sum()) / int(ns.sum()),
        per_string=float(np.mean(accepted)),
        first_failure_n=int(failed.min()) if failed.size else None,
        positions=int(ns.sum()),
    )


def deterministic_accuracy(params: LstmParams, data: Dataset) -> float:
    return accuracy_report(params, data).per_position
