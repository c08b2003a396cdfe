import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdl_lstm.codec import description_length
from mdl_lstm.golden import targets_matrix
from mdl_lstm.grammar import Dataset, build_test
from mdl_lstm.lstm import LstmParams, flatten, run_sequence
from mdl_lstm.objectives import (ObjectiveConfig, accuracy_report, ce_mean, combined_loss,
                                 data_cost_bits, deterministic_accuracy, l1, l2, loss_report,
                                 mdl_score, sequence_stats)
from mdl_lstm.trainer import init_params

EPS = 1 / 16383


def _nll_by_hand(params, n):
    text = "#" + "a" * n + "b" * n + "#"
    dists = run_sequence(params, text[:-1])
    targets = ["#ab".index(ch) for ch in text[1:]]
    return -sum(math.log(d[t]) for d, t in zip(dists, targets))


def _golden_nll(n, p=0.3):
    # only the a-phase is stochastic: n times "a" at 1-p, one closing guess at p
    return -math.log(p) - n * math.log(1 - p)


def test_uniform_net_ce():
    ds = Dataset(np.array([1]))
    assert ce_mean(LstmParams.zeros(1), ds) == pytest.approx(math.log(3))
    assert data_cost_bits(LstmParams.zeros(1), ds) == pytest.approx(3 * math.log2(3))


def test_zero_net_mdl_example():
    rep = mdl_score(LstmParams.zeros(1), Dataset(np.array([1])))
    assert rep.h_bits == 213
    assert rep.mdl_total == pytest.approx(213 + 3 * math.log2(3))


def test_ce_pools_tokens_against_hand_oracle():
    p = init_params(2, "normal", 4)
    ns = np.array([0, 2, 2, 5])
    ds = Dataset(ns)
    nll = [_nll_by_hand(p, n) for n in ns]
    assert ce_mean(p, ds) == pytest.approx(sum(nll) / sum(2 * ns + 1), rel=1e-12)
    assert data_cost_bits(p, ds) == pytest.approx(sum(nll) / math.log(2), rel=1e-12)


def test_weighted_ce():
    p = init_params(2, "normal", 4)
    ns, w = np.array([1, 3]), np.array([0.8, 0.2])
    nll = np.array([_nll_by_hand(p, n) for n in ns])
    ds = Dataset(ns, w)
    assert ce_mean(p, ds) == pytest.approx(np.sum(w * nll) / np.sum(w * (2 * ns + 1)), rel=1e-12)


def test_golden_ce_against_analytic(golden, splits):
    train = splits["train"]
    nll = np.array([_golden_nll(n) for n in train.ns])
    oracle = nll.sum() / np.sum(2 * train.ns + 1)
    assert ce_mean(golden, train) == pytest.approx(oracle, rel=1e-3)
    # population version: H(p) (E[n] + 1) / (2 E[n] + 1) with E[n] = 7/3
    h = -(0.3 * math.log(0.3) + 0.7 * math.log(0.7))
    assert h * (10 / 3) / (17 / 3) == pytest.approx(0.3594, abs=1e-4)


def test_golden_regularizers_closed_form(golden):
    L = 127
    log_t = np.log(targets_matrix(0.3) + EPS)
    head = (log_t[:3] - log_t[3]) / math.tanh(1)
    l1_oracle = 19 * L + np.abs(head).sum() + np.abs(log_t[3]).sum()
    # W_ig 4 entries, b_ii / b_if 6, b_io 3 at L; W_io 3 entries at 2L
    l2_oracle = 13 * L**2 + 3 * (2 * L) ** 2 + (head**2).sum() + (log_t[3] ** 2).sum()
    assert l1(golden) == pytest.approx(l1_oracle, rel=1e-12)
    assert l2(golden) == pytest.approx(l2_oracle, rel=1e-12)
    assert l1(golden) == pytest.approx(2508.3, abs=0.5)
    assert l2(golden) == pytest.approx(404.3e3, rel=1e-3)


def test_report_invariants(golden, splits):
    train = splits["train"]
    for cfg in (ObjectiveConfig("ce"), ObjectiveConfig("l1", 0.1), ObjectiveConfig("l2", 0.5)):
        rep = loss_report(golden, train, cfg)
        reg = {"ce": 0.0, "l1": l1(golden), "l2": l2(golden)}[cfg.kind]
        assert rep.combined == pytest.approx(rep.ce_mean_nats + cfg.lam * reg)
        assert rep.combined == pytest.approx(combined_loss(golden, train, cfg))
        assert rep.mdl_total == rep.data_cost_bits + rep.h_bits
    rep = loss_report(golden, train, ObjectiveConfig("mdl"))
    assert rep.h_bits == description_length(golden)
    assert rep.combined == rep.mdl_total >= rep.h_bits


def test_objective_config():
    assert ObjectiveConfig("CE+L1", 0.1).kind == "l1"
    assert ObjectiveConfig("l2", 1.0).label == "CE+L2(lambda=1)"
    with pytest.raises(ValueError):
        ObjectiveConfig("l3")
    with pytest.raises(ValueError):
        ObjectiveConfig("l1", -1)


def test_data_cost_doubles():
    p = init_params(3, "uniform", 1)
    one, two = Dataset(np.array([1, 4, 0])), Dataset(np.array([1, 4, 0, 1, 4, 0]))
    assert data_cost_bits(p, two) == pytest.approx(2 * data_cost_bits(p, one), rel=1e-12)
    assert mdl_score(p, two).h_bits == mdl_score(p, one).h_bits


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.floats(0, 5), st.floats(0, 5))
def test_combined_monotone_in_lambda(seed, a, b):
    p = init_params(2, "normal", seed)
    ds = Dataset(np.array([0, 1, 3]))
    lo, hi = sorted((a, b))
    for kind in ("l1", "l2"):
        assert combined_loss(p, ds, ObjectiveConfig(kind, lo)) <= combined_loss(p, ds, ObjectiveConfig(kind, hi))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.floats(-50, 50))
def test_accuracy_invariant_to_logit_shift(seed, shift):
    p = init_params(3, "normal", seed)
    q = p.replace(b_out=p["b_out"] + shift)
    ds = build_test(1, 12)
    assert accuracy_report(p, ds) == accuracy_report(q, ds)


def _always_b():
    p = LstmParams.zeros(1)
    return p.replace(b_out=np.array([0.0, 0.0, 5.0]))


def test_always_b_accuracy():
    ds = build_test(1, 10)
    rep = accuracy_report(_always_b(), ds)
    # per string (n - 1) / n correct
    assert rep.per_position == pytest.approx(sum(n - 1 for n in range(1, 11)) / sum(range(1, 11)))
    assert rep.per_string == 0.0 and rep.first_failure_n == 1


def test_argmax_ties_count_as_wrong():
    rep = accuracy_report(LstmParams.zeros(1), build_test(1, 3))
    assert rep.per_position == 0.0


def test_golden_accuracy_every_n(golden):
    ds = build_test(1, 200)
    stats = sequence_stats(golden, ds.ns)
    assert np.array_equal(stats.correct, ds.ns)
    assert deterministic_accuracy(golden, ds) == 1.0


def test_accuracy_needs_positions(golden):
    with pytest.raises(ValueError):
        accuracy_report(golden, Dataset(np.array([0, 0])))

