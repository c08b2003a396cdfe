import numpy as np
import pytest
from hypothesis import given, strategies as st

from mdl_lstm.grammar import (Dataset, GrammarConfig, StringSample, build_test, build_validation,
                              make_splits, sample_training)


def test_string_forms():
    s = StringSample(2)
    assert s.text == "#aabb#"
    assert s.tokens == (0, 1, 1, 2, 2, 0)
    assert StringSample.parse("##").n == 0
    for bad in ("#aab#", "aabb", "#ba#", "#"):
        with pytest.raises(ValueError):
            StringSample.parse(bad)


def test_geometric_law():
    ds = sample_training(GrammarConfig(0.3, 1), 200_000)
    # E[n] = (1-p)/p, P(n=0) = p
    assert ds.ns.mean() == pytest.approx(0.7 / 0.3, rel=0.02)
    assert np.mean(ds.ns == 0) == pytest.approx(0.3, abs=0.005)


def test_sampling_is_seeded():
    a = sample_training(GrammarConfig(0.3, 5), 100)
    b = sample_training(GrammarConfig(0.3, 5), 100)
    c = sample_training(GrammarConfig(0.3, 6), 100)
    assert a == b and a != c


def test_split_sizes(splits):
    assert len(splits["train"]) == 950
    val = splits["validation"]
    assert len(val) == 50
    assert val.ns[0] == splits["train"].max_n + 1
    assert np.all(np.diff(val.ns) == 1)
    assert splits["test"].ns[0] == 1 and splits["test"].ns[-1] == 1500


def test_validation_weights():
    train = Dataset(np.array([0, 1, 4]))
    val = build_validation(train, 4, GrammarConfig(0.3))
    raw = np.array([1, 0.7, 0.49, 0.343])
    np.testing.assert_allclose(val.weights, raw / raw.sum(), rtol=1e-14)
    assert val.ns.tolist() == [5, 6, 7, 8]


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([], dtype=int))
    with pytest.raises(ValueError):
        Dataset(np.array([1, -1]))
    with pytest.raises(ValueError):
        Dataset(np.array([1, 2]), np.array([0.2, 0.2]))
    with pytest.raises(ValueError):
        build_test(5, 2)


def test_grouped():
    uniq, mass = Dataset(np.array([3, 1, 3, 3])).grouped()
    assert uniq.tolist() == [1, 3] and mass.tolist() == [1, 3]
    uniq, mass = Dataset(np.array([2, 2, 5]), np.array([0.25, 0.25, 0.5])).grouped()
    assert mass.tolist() == [0.5, 0.5]


@given(st.lists(st.integers(0, 40), min_size=1, max_size=30), st.booleans())
def test_text_round_trip(ns, weighted):
    ns = np.array(ns)
    w = None
    if weighted:
        w = np.arange(1, ns.size + 1, dtype=float)
        w /= w.sum()
    ds = Dataset(ns, w)
    back = Dataset.loads(ds.dumps())
    assert np.array_equal(back.ns, ds.ns)
    if weighted:
        np.testing.assert_allclose(back.weights, w, rtol=1e-15)
    else:
        assert back.weights is None


def test_loads_reports_line():
    with pytest.raises(ValueError, match="line 2"):
        Dataset.loads("#ab#\n#abb#\n")


def test_file_round_trip(tmp_path, splits):
    path = tmp_path / "validation.txt"
    splits["validation"].save(path)
    assert Dataset.load(path) == splits["validation"]
    assert make_splits(GrammarConfig(0.3, 100), 1000)["train"] == splits["train"]
