import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdl_lstm.golden import GoldenConfig, build_golden, memory_trace, targets_matrix
from mdl_lstm.grammar import build_test
from mdl_lstm.lstm import run_sequence
from mdl_lstm.objectives import accuracy_report


def test_targets_rows():
    T = targets_matrix(0.3)
    np.testing.assert_allclose(T.sum(axis=1), 1.0)
    np.testing.assert_allclose(T[0], [0.3, 0.7, 0.0])


def test_phase_distributions(golden):
    T = targets_matrix(0.3)
    dists = run_sequence(golden, "#aaabbb")
    expected = [T[0], T[1], T[1], T[1], T[2], T[2], T[3]]
    assert np.max(np.abs(dists - np.array(expected))) < 1e-3


def test_head_constants(golden):
    eps = 1 / 16383
    assert golden["b_out"][0] == pytest.approx(math.log(1 + eps))
    assert golden["b_out"][1] == pytest.approx(math.log(eps))
    # row 1 of the head: ln((0.7 + eps) / eps) / tanh(1)
    assert golden["W_out"][1, 0] == pytest.approx(math.log((0.7 + eps) / eps) / math.tanh(1), rel=1e-12)
    assert golden["W_out"][1, 0] == pytest.approx(12.27348, abs=1e-5)


def test_counter_small(golden):
    c = memory_trace(golden, "#aaaabb")
    np.testing.assert_allclose(c[-1], [1, 1, 2], atol=1e-12)
    np.testing.assert_allclose(c[:, 2], [0, 1, 2, 3, 4, 3, 2], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 300), st.integers(0, 300))
def test_counter_tracks_difference(na, nb):
    golden = build_golden()
    text = "#" + "a" * na + "b" * nb
    c2 = memory_trace(golden, text)[:, 2]
    diff = np.cumsum([0] + [1] * na + [-1] * nb)
    assert np.max(np.abs(c2 - diff)) < 1e-9


def test_accepts_every_test_string(golden):
    rep = accuracy_report(golden, build_test(1, 300))
    assert rep.per_position == 1.0 and rep.per_string == 1.0
    assert rep.first_failure_n is None


def test_config_validation():
    with pytest.raises(ValueError):
        GoldenConfig(p=1.2)
    with pytest.raises(ValueError):
        GoldenConfig(large=3)
    with pytest.raises(ValueError):
        GoldenConfig(epsilon=0)


def test_other_p_changes_head_only():
    a, b = build_golden(GoldenConfig(p=0.3)), build_golden(GoldenConfig(p=0.5))
    assert np.array_equal(a["W_ig"], b["W_ig"])
    assert not np.array_equal(a["W_out"], b["W_out"])
    np.testing.assert_allclose(run_sequence(b, "#")[0], [0.5, 0.5, 0], atol=1e-3)
