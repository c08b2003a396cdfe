"""Backpropagation-through-time training with Adam, dropout and early stopping."""
from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from scipy.special import expit

from .grammar import Dataset, GrammarConfig, make_splits
from .lstm import (GATES, N_SYMBOLS, LstmParams, block_slices, flatten, log_softmax,
                   n_params, param_shapes, stacked_gates, unflatten)
from .objectives import _padded_inputs, _target_matrix, accuracy_report, ce_mean

log = logging.getLogger(__name__)

REGS = ("none", "l1", "l2")


class GradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    train_size: int = 1000
    seed: int = 100
    reg: str = "none"
    lam: float = 0.0
    dropout: float = 0.0
    patience: int | None = 2
    init: str = "normal"
    epochs: int = 20_000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int | None = None   # None = full batch
    hidden_size: int = 3
    p: float = 0.3

    def __post_init__(self):
        if self.reg not in REGS:
            raise ValueError(f"reg must be one of {REGS}")
        if self.reg == "none" and self.lam != 0:
            raise ValueError("lambda given without a regularizer")
        if self.reg != "none" and self.lam <= 0:
            raise ValueError(f"reg={self.reg} needs a positive lambda")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 when set")
        if self.init not in ("uniform", "normal"):
            raise ValueError("init must be 'uniform' or 'normal'")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch size must be positive")

    @property
    def tag(self) -> str:
        reg = "none" if self.reg == "none" else f"{self.reg}-{self.lam:g}"
        return (f"size{self.train_size}_seed{self.seed}_reg{reg}_drop{self.dropout:g}"
                f"_pat{self.patience or 'none'}_{self.init}_batch{self.batch or 'full'}")


@dataclass
class TrainResult:
    config: TrainConfig
    params: LstmParams
    history: list[tuple[float, float]]
    stopped_epoch: int
    best_epoch: int
    val_loss_best: float
    diverged: bool = False
    max_train_n: int = 0
    val_det_acc: float = float("nan")
    test_det_acc: float = float("nan")
    test_string_acc: float = float("nan")
    first_failure_n: int | None = None
    error: str = ""

    def row(self) -> dict:
        out = {f.name: getattr(self.config, f.name) for f in fields(self.config)}
        out.update(
            stopped_epoch=self.stopped_epoch,
            best_epoch=self.best_epoch,
            val_loss_best=self.val_loss_best,
            diverged=self.diverged,
            max_train_n=self.max_train_n,
            val_det_acc=self.val_det_acc,
            test_det_acc=self.test_det_acc,
            test_string_acc=self.test_string_acc,
            first_failure_n=self.first_failure_n,
            error=self.error,
        )
        return out


def init_params(hidden_size: int, scheme: str = "normal", seed: int = 0) -> LstmParams:
    """U(-k, k) or N(0, k^2) entries with k = 1/sqrt(hidden_size)."""
    if hidden_size < 1:
        raise ValueError("hidden_size must be >= 1")
    rng = np.random.default_rng(seed)
    k = 1.0 / math.sqrt(hidden_size)
    size = n_params(hidden_size)
    if scheme == "uniform":
        values = rng.uniform(-k, k, size)
    elif scheme == "normal":
        values = rng.normal(0.0, k, size)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return unflatten(values, hidden_size)


def reg_value_and_grad(theta: np.ndarray, reg: str, lam: float):
    if reg == "none" or lam == 0:
        return 0.0, np.zeros_like(theta)
    if reg == "l1":
        return lam * math.fsum(np.abs(theta)), lam * np.sign(theta)
    if reg == "l2":
        return lam * math.fsum(theta**2), 2 * lam * theta
    raise ValueError(f"unknown regularizer {reg!r}")


def _batch_arrays(ns: np.ndarray, mass: np.ndarray, dropout_mask):
    order = np.argsort(-ns, kind="stable")
    ns, mass = ns[order], mass[order]
    if dropout_mask is not None:
        dropout_mask = dropout_mask[order]
    return ns, mass, dropout_mask


def ce_loss_and_grad(params: LstmParams, ns, mass=None, dropout_mask=None):
    """Per-token CE pooled over strings and its exact gradient (flat, canonical order).

    ``ns[j]`` is one string ``#a^nb^n#`` carrying weight ``mass[j]``; the loss is
    ``sum(mass * nll) / sum(mass * n_targets)``. ``dropout_mask`` (B, T, h) multiplies
    h_t before the output layer.
    """
    ns = np.asarray(ns, dtype=np.int64)
    mass = np.ones(ns.size) if mass is None else np.asarray(mass, dtype=np.float64)
    ns, mass, dropout_mask = _batch_arrays(ns, mass, dropout_mask)
    H = params.hidden_size
    inputs = _padded_inputs(ns)
    lengths = 2 * ns + 1
    T = int(lengths.max())
    coeff = mass / math.fsum(mass * lengths)
    targets = _target_matrix(ns)
    rows_all = np.arange(ns.size)
    active = np.count_nonzero(lengths[None, :] > np.arange(T)[:, None], axis=1)

    W_in, W_h, bias = stacked_gates(params)
    x_table = W_in.T + bias
    W_hT = W_h.T
    W_out, b_out = params["W_out"], params["b_out"]
    sl_i, sl_f, sl_g, sl_o = (slice(q * H, (q + 1) * H) for q in range(4))

    h = np.zeros((ns.size, H))
    c = np.zeros((ns.size, H))
    tape = []
    per_row = np.zeros(ns.size)
    for t in range(T):
        k = int(active[t])
        x = inputs[:k, t]
        hp, cp = h[:k].copy(), c[:k].copy()
        z = x_table[x] + hp @ W_hT
        act = expit(z)
        act[:, sl_g] = np.tanh(z[:, sl_g])
        cn = act[:, sl_f] * cp + act[:, sl_i] * act[:, sl_g]
        tc = np.tanh(cn)
        hn = act[:, sl_o] * tc
        hd = hn if dropout_mask is None else hn * dropout_mask[:k, t]
        logp = log_softmax(hd @ W_out.T + b_out)
        tgt = targets[:k, t]
        per_row[:k] -= logp[rows_all[:k], tgt]
        h[:k], c[:k] = hn, cn
        tape.append((k, x, hp, cp, act, tc, hd, logp, tgt))
    loss = math.fsum(coeff * per_row)

    dW_x = np.zeros((N_SYMBOLS, 4 * H))   # gradient wrt x_table rows
    dW_h = np.zeros((4 * H, H))
    dW_out = np.zeros_like(W_out)
    db_out = np.zeros_like(b_out)
    dh_next = np.zeros((ns.size, H))
    dc_next = np.zeros((ns.size, H))
    onehots = np.eye(N_SYMBOLS)
    for t in range(T - 1, -1, -1):
        k, x, hp, cp, act, tc, hd, logp, tgt = tape[t]
        i, f, g, o = act[:, sl_i], act[:, sl_f], act[:, sl_g], act[:, sl_o]
        dlogits = np.exp(logp)
        dlogits[rows_all[:k], tgt] -= 1.0
        dlogits *= coeff[:k, None]
        dW_out += dlogits.T @ hd
        db_out += dlogits.sum(axis=0)
        dhd = dlogits @ W_out
        dh = (dhd if dropout_mask is None else dhd * dropout_mask[:k, t]) + dh_next[:k]
        dc = dh * o * (1.0 - tc**2) + dc_next[:k]
        dz = np.empty((k, 4 * H))
        dz[:, sl_i] = dc * g * i * (1.0 - i)
        dz[:, sl_f] = dc * cp * f * (1.0 - f)
        dz[:, sl_g] = dc * i * (1.0 - g**2)
        dz[:, sl_o] = dh * tc * o * (1.0 - o)
        dW_x += onehots[x].T @ dz
        dW_h += dz.T @ hp
        dh_next[:k] = dz @ W_h
        dc_next[:k] = dc * f

    db = dW_x.sum(axis=0)
    grads = {"W_out": dW_out, "b_out": db_out}
    for q, gate in enumerate(GATES):
        rows = slice(q * H, (q + 1) * H)
        grads[f"W_i{gate}"] = dW_x[:, rows].T
        grads[f"W_h{gate}"] = dW_h[rows]
        grads[f"b_i{gate}"] = db[rows]
        grads[f"b_h{gate}"] = db[rows]
    flat = np.concatenate([grads[name].ravel() for name in param_shapes(H)])
    return loss, flat


def gradients(params: LstmParams, batch: Dataset, reg: str = "none", lam: float = 0.0,
              dropout_mask: np.ndarray | None = None) -> np.ndarray:
    """Gradient of mean per-token CE plus ``lam * reg`` w.r.t. the flat parameters.

    With a dropout mask each sample is its own row (mask shape (len(batch), T, h)),
    otherwise identical strings are merged.
    """
    if dropout_mask is None:
        ns, mass = batch.grouped()
    else:
        ns, mass = batch.ns, batch.sample_weights()
    _, grad = ce_loss_and_grad(params, ns, mass, dropout_mask)
    _, rgrad = reg_value_and_grad(flatten(params), reg, lam)
    grad = grad + rgrad
    _check_finite(grad, params.hidden_size)
    return grad


def _check_finite(grad: np.ndarray, hidden_size: int) -> None:
    if np.all(np.isfinite(grad)):
        return
    bad = [name for name, sl in block_slices(hidden_size).items() if not np.all(np.isfinite(grad[sl]))]
    raise GradientError(f"non-finite gradient in parameter block(s): {', '.join(bad)}")


def make_dropout_mask(rng: np.random.Generator, rate: float, rows: int, T: int, H: int):
    if rate == 0:
        return None
    keep = rng.random((rows, T, H)) >= rate
    return keep / (1.0 - rate)


class Adam:
    def __init__(self, size: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _minibatches(rng: np.random.Generator, n: int, batch: int | None):
    if batch is None or batch >= n:
        yield np.arange(n)
        return
    perm = rng.permutation(n)
    for start in range(0, n, batch):
        yield perm[start:start + batch]


def train(cfg: TrainConfig, datasets: dict[str, Dataset], evaluate: bool = True) -> TrainResult:
    """Train from ``init_params``; returns the snapshot with the best validation CE."""
    train_set, val_set = datasets["train"], datasets.get("validation")
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg.hidden_size, cfg.init, cfg.seed)
    theta = flatten(params)
    opt = Adam(theta.size, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    H = cfg.hidden_size
    T = 2 * train_set.max_n + 1

    history: list[tuple[float, float]] = []
    best_theta, best_val, best_epoch = theta.copy(), math.inf, 0
    bad_epochs, diverged, epoch = 0, False, 0
    for epoch in range(1, cfg.epochs + 1):
        train_loss = 0.0
        for idx in _minibatches(rng, len(train_set), cfg.batch):
            sub_ns = train_set.ns[idx]
            mask = make_dropout_mask(rng, cfg.dropout, idx.size, T, H)
            p = unflatten(theta, H)
            if mask is None:
                ns, mass = np.unique(sub_ns, return_counts=True)
                loss, grad = ce_loss_and_grad(p, ns, mass)
            else:
                loss, grad = ce_loss_and_grad(p, sub_ns, None, mask)
            rloss, rgrad = reg_value_and_grad(theta, cfg.reg, cfg.lam)
            loss += rloss
            grad = grad + rgrad
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                diverged = True
                break
            theta = opt.step(theta, grad)
            train_loss += loss * idx.size / len(train_set)
        if diverged or not np.all(np.isfinite(theta)):
            diverged = True
            log.warning("%s diverged at epoch %d", cfg.tag, epoch)
            break
        val_loss = ce_mean(unflatten(theta, H), val_set) if val_set is not None else train_loss
        history.append((train_loss, val_loss))
        if not math.isfinite(val_loss):
            diverged = True
            break
        if val_loss < best_val:
            best_val, best_theta, best_epoch = val_loss, theta.copy(), epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if cfg.patience is not None and bad_epochs >= cfg.patience:
                break
    result = TrainResult(
        config=cfg,
        params=unflatten(best_theta, H),
        history=history,
        stopped_epoch=epoch,
        best_epoch=best_epoch,
        val_loss_best=best_val,
        diverged=diverged,
        max_train_n=train_set.max_n,
    )
    if evaluate:
        attach_accuracy(result, datasets)
    return result


def attach_accuracy(result: TrainResult, datasets: dict[str, Dataset]) -> TrainResult:
    if "validation" in datasets:
        result.val_det_acc = accuracy_report(result.params, datasets["validation"]).per_position
    if "test" in datasets:
        rep = accuracy_report(result.params, datasets["test"])
        result.test_det_acc = rep.per_position
        result.test_string_acc = rep.per_string
        result.first_failure_n = rep.first_failure_n
    return result


# grid search

FULL_GRID = {
    "train_size": [500, 1000, 5000, 10000],
    "seed": [100, 200, 300, 400, 500],
    "reg": ["none", "l1", "l2"],
    "lam": [0.1, 0.5, 1.0],
    "dropout": [0.0, 0.2, 0.4, 0.6],
    "patience": [None, 2, 10],
    "init": ["uniform", "normal"],
}


def expand_grid(spec: dict) -> list[TrainConfig]:
    """Cross product of the listed values; ``lam`` only pairs with a regularizer."""
    spec = dict(spec)
    regs = spec.pop("reg", ["none"])
    lams = spec.pop("lam", [])
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(spec) - known
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    reg_options = []
    for reg in regs:
        if reg == "none":
            reg_options.append({"reg": "none", "lam": 0.0})
        else:
            if not lams:
                raise ValueError(f"reg={reg} listed without any lambda values")
            reg_options.extend({"reg": reg, "lam": lam} for lam in lams)
    keys = list(spec)
    configs = []
    for values in itertools.product(*(spec[k] for k in keys)):
        base = dict(zip(keys, values))
        for ro in reg_options:
            configs.append(TrainConfig(**base, **ro))
    if not configs:
        raise ValueError("empty grid")
    return configs


def run_config(cfg: TrainConfig, test_range=(1, 1500)) -> TrainResult:
    try:
        datasets = make_splits(GrammarConfig(cfg.p, cfg.seed), cfg.train_size, test_range)
        return train(cfg, datasets)
    except Exception as exc:  # one failing row must not abort the grid
        log.exception("run %s failed", cfg.tag)
        return TrainResult(cfg, init_params(cfg.hidden_size, cfg.init, cfg.seed), [], 0, 0,
                           math.inf, error=f"{type(exc).__name__}: {exc}")


def grid_search(configs: list[TrainConfig], jobs: int = 1, test_range=(1, 1500)) -> list[TrainResult]:
    if not configs:
        raise ValueError("empty grid")
    if jobs <= 1:
        results = [run_config(c, test_range) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_config, configs, itertools.repeat(test_range)))
    return sorted(results, key=lambda r: (r.val_loss_best, r.config.tag))


def write_grid_csv(results: list[TrainResult], path: str | Path) -> None:
    rows = [r.row() for r in results]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def write_history_csv(result: TrainResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, (tr, va) in enumerate(result.history, 1):
            writer.writerow([epoch, repr(tr), repr(va)])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v
