"""Single-layer LSTM cell with a linear softmax head.

Symbols are fixed to ``0 = '#'``, ``1 = 'a'``, ``2 = 'b'``; one-hot inputs are
realized by selecting columns of the input matrices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

ALPHABET = "#ab"
N_SYMBOLS = 3
HASH, A, B = 0, 1, 2

GATES = ("i", "f", "g", "o")
INPUT_MATS = tuple(f"W_i{g}" for g in GATES)
HIDDEN_MATS = tuple(f"W_h{g}" for g in GATES)
INPUT_BIASES = tuple(f"b_i{g}" for g in GATES)
HIDDEN_BIASES = tuple(f"b_h{g}" for g in GATES)
# canonical flattening order
PARAM_NAMES = INPUT_MATS + HIDDEN_MATS + INPUT_BIASES + HIDDEN_BIASES + ("W_out", "b_out")


class ShapeError(ValueError):
    """Raised when arrays do not match the declared hidden size."""


def param_shapes(hidden_size: int) -> dict[str, tuple[int, ...]]:
    h = hidden_size
    shapes: dict[str, tuple[int, ...]] = {}
    for name in INPUT_MATS:
        shapes[name] = (h, N_SYMBOLS)
    for name in HIDDEN_MATS:
        shapes[name] = (h, h)
    for name in INPUT_BIASES + HIDDEN_BIASES:
        shapes[name] = (h,)
    shapes["W_out"] = (N_SYMBOLS, h)
    shapes["b_out"] = (N_SYMBOLS,)
    return shapes


def n_params(hidden_size: int) -> int:
    h = hidden_size
    return 4 * h * N_SYMBOLS + 4 * h * h + 8 * h + N_SYMBOLS * h + N_SYMBOLS


@dataclass(frozen=True, eq=False)
class LstmParams:
    hidden_size: int
    weights: dict[str, np.ndarray]

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ShapeError(f"hidden_size must be positive, got {self.hidden_size}")
        shapes = param_shapes(self.hidden_size)
        object.__setattr__(self, "weights", dict(self.weights))
        if set(self.weights) != set(shapes):
            missing = set(shapes) - set(self.weights)
            extra = set(self.weights) - set(shapes)
            raise ShapeError(f"bad parameter names: missing={sorted(missing)} extra={sorted(extra)}")
        for name, shape in shapes.items():
            arr = np.array(self.weights[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite values")
            arr.setflags(write=False)
            self.weights[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.weights[name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LstmParams):
            return NotImplemented
        if other.hidden_size != self.hidden_size:
            return False
        return all(np.array_equal(self[k], other[k]) for k in PARAM_NAMES)

    @classmethod
    def zeros(cls, hidden_size: int) -> LstmParams:
        return cls(hidden_size, {k: np.zeros(s) for k, s in param_shapes(hidden_size).items()})

    def replace(self, **updates: np.ndarray) -> LstmParams:
        w = {k: np.array(v) for k, v in self.weights.items()}
        w.update({k: np.asarray(v, dtype=np.float64) for k, v in updates.items()})
        return LstmParams(self.hidden_size, w)

    # JSON document: {"hidden_size": h, "weights": {name: nested lists}}
    def to_json(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "weights": {k: self[k].tolist() for k in PARAM_NAMES},
        }

    @classmethod
    def from_json(cls, doc: dict) -> LstmParams:
        return cls(int(doc["hidden_size"]), {k: np.asarray(v, dtype=np.float64) for k, v in doc["weights"].items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> LstmParams:
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> LstmState:
        return cls(np.zeros(hidden_size), np.zeros(hidden_size))


def flatten(params: LstmParams) -> np.ndarray:
    """Concatenate every parameter block (row-major) in canonical order."""
    return np.concatenate([params[k].ravel() for k in PARAM_NAMES])


def unflatten(values: np.ndarray, hidden_size: int) -> LstmParams:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size != n_params(hidden_size):
        raise ShapeError(
            f"vector of length {values.size} does not fit hidden_size={hidden_size} "
            f"(expected {n_params(hidden_size)})"
        )
    out, pos = {}, 0
    for name, shape in param_shapes(hidden_size).items():
        size = int(np.prod(shape))
        out[name] = values[pos:pos + size].reshape(shape).copy()
        pos += size
    return LstmParams(hidden_size, out)


def block_slices(hidden_size: int) -> dict[str, slice]:
    """Position of each named block inside the flat parameter vector."""
    out, pos = {}, 0
    for name, shape in param_shapes(hidden_size).items():
        size = int(np.prod(shape))
        out[name] = slice(pos, pos + size)
        pos += size
    return out


def sigmoid(z):
    return expit(z)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _gate_preacts(params: LstmParams, x, h_prev):
    """Pre-activations of (i, f, g, o); ``x`` indexes input columns, ``h_prev`` is (..., h)."""
    out = []
    for g in GATES:
        z = (
            params[f"W_i{g}"][:, x].T
            + params[f"b_i{g}"]
            + h_prev @ params[f"W_h{g}"].T
            + params[f"b_h{g}"]
        )
        out.append(z)
    return out


def step(params: LstmParams, state: LstmState, x: int) -> tuple[LstmState, np.ndarray]:
    """Consume one symbol; return the new state and the next-symbol distribution."""
    h = params.hidden_size
    if state.h.shape != (h,) or state.c.shape != (h,):
        raise ShapeError(f"state shapes {state.h.shape}/{state.c.shape} do not match hidden_size={h}")
    if x not in (HASH, A, B):
        raise ValueError(f"unknown symbol id {x!r}")
    zi, zf, zg, zo = _gate_preacts(params, x, state.h)
    i, f, o = sigmoid(zi), sigmoid(zf), sigmoid(zo)
    g = np.tanh(zg)
    c = f * state.c + i * g
    h_t = o * np.tanh(c)
    dist = softmax(params["W_out"] @ h_t + params["b_out"])
    return LstmState(h_t, c), dist


def encode_tokens(text: str) -> list[int]:
    try:
        return [ALPHABET.index(ch) for ch in text]
    except ValueError:
        raise ValueError(f"string {text!r} contains symbols outside {ALPHABET!r}") from None


def decode_tokens(tokens) -> str:
    return "".join(ALPHABET[t] for t in tokens)


def _as_tokens(tokens) -> list[int]:
    return encode_tokens(tokens) if isinstance(tokens, str) else [int(t) for t in tokens]


def run_sequence(params: LstmParams, tokens) -> np.ndarray:
    """Feed ``tokens`` from the zero state; row ``t`` is the prediction after token ``t``."""
    tokens = _as_tokens(tokens)
    if not tokens:
        raise ValueError("empty token sequence")
    if tokens[0] != HASH:
        raise ValueError("sequences must start with '#'")
    state = LstmState.zeros(params.hidden_size)
    dists = []
    for x in tokens:
        state, dist = step(params, state, x)
        dists.append(dist)
    return np.array(dists)


def cell_trace(params: LstmParams, tokens) -> list[LstmState]:
    tokens = _as_tokens(tokens)
    state = LstmState.zeros(params.hidden_size)
    states = []
    for x in tokens:
        state, _ = step(params, state, x)
        states.append(state)
    return states


def stacked_gates(params: LstmParams):
    """(4h, 3) input weights, (4h, h) recurrent weights and summed (4h,) biases, gate order i, f, g, o."""
    W_in = np.concatenate([params[f"W_i{g}"] for g in GATES])
    W_h = np.concatenate([params[f"W_h{g}"] for g in GATES])
    bias = np.concatenate([params[f"b_i{g}"] + params[f"b_h{g}"] for g in GATES])
    return W_in, W_h, bias


def forward_batch(params: LstmParams, inputs: np.ndarray, lengths: np.ndarray):
    """Vectorized forward pass over padded sequences.

    ``inputs`` is (B, T) of symbol ids; rows must be sorted by decreasing length so
    that only a leading slice of the batch is active at each step. Yields
    ``(t, k, logp)`` where ``k`` rows are active and ``logp`` is (k, 3).
    """
    bsz, T = inputs.shape
    H = params.hidden_size
    W_in, W_h, bias = stacked_gates(params)
    # input contribution per symbol, precomputed: (3, 4h)
    x_table = W_in.T + bias
    W_hT = W_h.T
    W_outT, b_out = params["W_out"].T, params["b_out"]
    h = np.zeros((bsz, H))
    c = np.zeros((bsz, H))
    active = np.count_nonzero(lengths[None, :] > np.arange(T)[:, None], axis=1)
    for t in range(T):
        k = int(active[t])
        if k == 0:
            break
        z = x_table[inputs[:k, t]] + h[:k] @ W_hT
        s = expit(z)
        g = np.tanh(z[:, 2 * H:3 * H])
        cn = s[:, H:2 * H] * c[:k] + s[:, :H] * g
        hn = s[:, 3 * H:] * np.tanh(cn)
        h[:k], c[:k] = hn, cn
        yield t, k, log_softmax(hn @ W_outT + b_out)
