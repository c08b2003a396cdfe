import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdl_lstm.codec import (DecodeError, Rational, decode_int, decode_network, decode_rational,
                            description_length, encode_int, encode_network, encode_rational,
                            int_code_length, pack_bits, rationalize, rationalize_brute,
                            read_bitstream, unpack_bits, write_bitstream)
from mdl_lstm.lstm import LstmParams, flatten, n_params, unflatten


def test_integer_code_literals():
    assert encode_int(1) == "101"
    assert encode_int(2) == "11010"
    assert encode_int(5) == "1110101"
    assert encode_int(3) == "11011"


def test_rational_literals():
    assert encode_rational(Rational.of(2, 5)) == "1" + "11010" + "1110101"
    assert len(encode_rational(Rational.of(2, 5))) == 13
    assert encode_rational(Rational.of(-1, 2)) == "0" + "101" + "11010"
    assert encode_rational(Rational.of(0)) == "1100101"


def test_network_prefix_is_hidden_size(golden):
    assert encode_network(golden).startswith("11011")
    assert encode_network(LstmParams.zeros(1)).startswith("101")


def test_prefix_free_exhaustive():
    codes = sorted(encode_int(n) for n in range(1, 10_001))
    # a prefix would sort immediately before some word that extends it
    assert not any(b.startswith(a) for a, b in zip(codes, codes[1:]))


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_prefix_free_pairs(a, b):
    if a != b:
        assert not encode_int(b).startswith(encode_int(a))


@given(st.integers(1, 10**12))
def test_int_round_trip(n):
    code = encode_int(n)
    assert len(code) == int_code_length(n) == 2 * n.bit_length() + 1
    assert decode_int(code + "0110") == (n, len(code))


@given(st.integers(-10**6, 10**6), st.integers(1, 10**6))
def test_rational_round_trip(num, den):
    w = Rational.of(num, den)
    assert Fraction(w.sign * w.num, w.den) == Fraction(num, den)
    code = encode_rational(w)
    assert decode_rational(code) == (w, len(code))


def test_rational_rejects_non_canonical():
    with pytest.raises(ValueError):
        Rational(1, 2, 4)
    with pytest.raises(ValueError):
        Rational(-1, 0, 1)
    with pytest.raises(ZeroDivisionError):
        Rational.of(1, 0)


def test_decode_rejects_non_canonical_stream():
    # 2/4 is not in lowest terms
    with pytest.raises(DecodeError):
        decode_rational("1" + encode_int(2) + encode_int(4))


@st.composite
def rational_networks(draw):
    h = draw(st.integers(1, 3))
    fr = st.fractions(min_value=-50, max_value=50, max_denominator=1000)
    values = [float(f) for f in draw(st.lists(fr, min_size=n_params(h), max_size=n_params(h)))]
    return unflatten(np.array(values), h)


@settings(max_examples=25, deadline=None)
@given(rational_networks())
def test_network_round_trip(net):
    bits = encode_network(net)
    assert len(bits) == description_length(net)
    assert decode_network(bits) == net


def test_decode_network_errors(golden):
    bits = encode_network(golden)
    with pytest.raises(DecodeError):
        decode_network(bits + "1")
    with pytest.raises(DecodeError) as err:
        decode_network(bits[:-3])
    assert err.value.offset >= 0
    with pytest.raises(DecodeError):
        decode_network(bits.replace("0", "2", 1))


def test_zero_network_length():
    # h=1 has 30 weights, each "+0/1" costs 7 bits, plus 3 bits for h
    assert n_params(1) == 30
    assert description_length(LstmParams.zeros(1)) == 3 + 30 * 7


def test_golden_length_independent(golden):
    oracle = int_code_length(3)
    for w in flatten(golden).tolist():
        f = Fraction(w).limit_denominator(1000)
        oracle += 1 + (3 if f == 0 else 2 * abs(f.numerator).bit_length() + 1)
        oracle += 2 * f.denominator.bit_length() + 1
    assert description_length(golden) == oracle == 1303


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_rationalize_matches_limit_denominator(x):
    r = rationalize(x, 1000)
    f = Fraction(x).limit_denominator(1000)
    # both are best approximations; they can only differ on an exact tie
    assert r.den <= 1000
    assert abs(Fraction(r.sign * r.num, r.den) - Fraction(x)) == abs(f - Fraction(x))


def test_rationalize_brute_sample():
    rng = np.random.default_rng(0)
    for x in rng.uniform(-20, 20, 200):
        assert rationalize(x, 1000) == rationalize_brute(x, 1000)


def test_rationalize_ties_and_edges():
    assert rationalize(0.0) == Rational.of(0)
    assert rationalize(-0.0) == Rational.of(0)
    assert rationalize(0.5, 1) == Rational.of(0)  # 0/1 and 1/1 tie: smaller numerator
    assert rationalize(3.0) == Rational.of(3)
    assert rationalize(math.pi, 7) == Rational.of(22, 7)
    with pytest.raises(ValueError):
        rationalize(float("nan"))


@given(st.text(alphabet="01", max_size=200))
def test_pack_round_trip(bits):
    data = pack_bits(bits)
    assert len(data) == -(-len(bits) // 8)
    assert unpack_bits(data, len(bits)) == bits


def test_pack_msb_first(tmp_path):
    assert pack_bits("1") == b"\x80"
    assert pack_bits("000000011") == b"\x01\x80"
    path = tmp_path / "g.bin"
    sidecar = write_bitstream("1101101", path)
    assert sidecar.read_text() == "7\n"
    assert read_bitstream(path) == "1101101"
