"""Hand-built LSTM that counts a's against b's and emits the exact a^n b^n
next-symbol distribution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lstm import LstmParams, cell_trace


@dataclass(frozen=True)
class GoldenConfig:
    p: float = 0.3
    large: float = 2**7 - 1
    epsilon: float = 1 / (2**14 - 1)

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.large < 20:
            raise ValueError(f"large={self.large} is too small to saturate the gates")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def targets_matrix(p: float) -> np.ndarray:
    """Rows: after '#', inside the a-phase, inside the b-phase, after the last b."""
    return np.array([
        [p, 1 - p, 0.0],
        [0.0, 1 - p, p],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0],
    ])


def build_golden(cfg: GoldenConfig = GoldenConfig()) -> LstmParams:
    L = cfg.large
    params = LstmParams.zeros(3)
    w = {k: np.array(v) for k, v in params.weights.items()}

    # c_t = [1, 1, #a - #b]
    w["W_ig"] = L * np.array([[1.0, 0, 0], [1, 0, 0], [0, 1, -1]])
    w["b_ii"] = L * np.ones(3)
    w["b_if"] = L * np.ones(3)
    # output gate opens the unit matching the current input symbol
    w["W_io"] = L * 2 * np.eye(3)
    w["b_io"] = -L * np.ones(3)

    log_targets = np.log(targets_matrix(cfg.p) + cfg.epsilon)
    b_out = log_targets[3]
    w["W_out"] = (log_targets[:3] - b_out).T / math.tanh(1.0)
    w["b_out"] = b_out
    return LstmParams(3, w)


def memory_trace(params: LstmParams, tokens) -> np.ndarray:
    """Memory cell ``c_t`` after every step, shape (T, hidden_size)."""
    return np.array([s.c for s in cell_trace(params, tokens)])
