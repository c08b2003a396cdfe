"""a^n b^n corpora drawn from the PCFG ``S -> a S b (1-p) | <empty> (p)``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lstm import A, B, HASH, decode_tokens


@dataclass(frozen=True)
class GrammarConfig:
    p: float = 0.3
    seed: int = 100

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")


@dataclass(frozen=True)
class StringSample:
    n: int

    @property
    def tokens(self) -> tuple[int, ...]:
        return (HASH,) + (A,) * self.n + (B,) * self.n + (HASH,)

    @property
    def text(self) -> str:
        return decode_tokens(self.tokens)

    @classmethod
    def parse(cls, text: str) -> StringSample:
        n = (len(text) - 2) // 2
        if len(text) < 2 or text != "#" + "a" * n + "b" * n + "#":
            raise ValueError(f"{text!r} is not a #a^nb^n# string")
        return cls(n)


@dataclass(frozen=True)
class Dataset:
    """A list of a^n b^n strings with optional per-sample weights (None = uniform)."""

    ns: np.ndarray
    weights: np.ndarray | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        ns = np.asarray(self.ns, dtype=np.int64)
        if ns.ndim != 1 or ns.size == 0:
            raise ValueError("dataset must hold at least one sample")
        if np.any(ns < 0):
            raise ValueError("n must be non-negative")
        object.__setattr__(self, "ns", ns)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != ns.shape or np.any(w < 0):
                raise ValueError("weights must be non-negative, one per sample")
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {math.fsum(w)}, expected 1")
            object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.ns.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.weights is None) != (other.weights is None):
            return False
        same_w = self.weights is None or np.array_equal(self.weights, other.weights)
        return np.array_equal(self.ns, other.ns) and same_w

    @property
    def samples(self) -> list[StringSample]:
        return [StringSample(int(n)) for n in self.ns]

    @property
    def max_n(self) -> int:
        return int(self.ns.max())

    def sample_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(len(self), 1.0 / len(self))
        return self.weights

    def token_count(self) -> int:
        return int(np.sum(2 * self.ns + 2))

    def grouped(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct n values and the total sample weight (uniform: count) on each."""
        if self.weights is None:
            uniq, counts = np.unique(self.ns, return_counts=True)
            return uniq, counts.astype(np.float64)
        uniq, inv = np.unique(self.ns, return_inverse=True)
        return uniq, np.bincount(inv, weights=self.weights)

    # text form: one string per line, optional tab-separated weight
    def dumps(self) -> str:
        if self.weights is None:
            return "".join(f"{s.text}\n" for s in self.samples)
        return "".join(f"{s.text}\t{w!r}\n" for s, w in zip(self.samples, self.weights.tolist()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, name: str = "") -> Dataset:
        ns, ws = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            cols = line.split()
            try:
                ns.append(StringSample.parse(cols[0]).n)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            if len(cols) > 1:
                ws.append(float(cols[1]))
        if ws and len(ws) != len(ns):
            raise ValueError("weight column must be present on every line or none")
        weights = None
        if ws:
            w = np.array(ws)
            weights = w / math.fsum(w) if abs(math.fsum(w) - 1.0) > 1e-12 else w
        return cls(np.array(ns), weights, name=name)

    @classmethod
    def load(cls, path: str | Path) -> Dataset:
        path = Path(path)
        return cls.loads(path.read_text(), name=path.stem)


def sample_training(cfg: GrammarConfig, size: int) -> Dataset:
    """Draw ``size`` strings with P(n) = p (1-p)^n, uniform weights."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    # numpy's geometric counts trials to first success (support 1, 2, ...)
    ns = rng.geometric(cfg.p, size=size) - 1
    return Dataset(ns, name="train")


def build_validation(train: Dataset, count: int, cfg: GrammarConfig) -> Dataset:
    """One string per n just above the training range, weighted by the PCFG law."""
    if count < 1:
        raise ValueError("count must be >= 1")
    ns = np.arange(train.max_n + 1, train.max_n + 1 + count)
    # relative weights (1-p)^(n - n_min); the p (1-p)^n_min factor cancels
    raw = (1 - cfg.p) ** (ns - ns[0])
    return Dataset(ns, raw / math.fsum(raw), name="validation")


def build_test(n_min: int = 1, n_max: int = 1500) -> Dataset:
    if not 1 <= n_min <= n_max:
        raise ValueError(f"need 1 <= n_min <= n_max, got {n_min}, {n_max}")
    return Dataset(np.arange(n_min, n_max + 1), name="test")


def make_splits(cfg: GrammarConfig, size: int, test_range=(1, 1500)) -> dict[str, Dataset]:
    """Draw ``size`` strings, keep the first ceil(95%) as training and build a
    validation range of the remaining count above the training maximum."""
    drawn = sample_training(cfg, size)
    n_train = -(-95 * size // 100)
    train = Dataset(drawn.ns[:n_train], name="train")
    n_val = size - n_train
    out = {"train": train}
    if n_val >= 1:
        out["validation"] = build_validation(train, n_val, cfg)
    out["test"] = build_test(*test_range)
    return out
