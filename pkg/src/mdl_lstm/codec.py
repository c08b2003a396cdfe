"""Prefix-free network encoding and description length |H| in bits.

Bit streams are plain strings over ``{'0', '1'}``; their length is the code
length. Integers use ``unary(bitlen(n)) + '0' + binary(n)``, a weight is
``sign + E(num) + E(den)`` and a network is ``E(hidden_size)`` followed by every
weight in canonical parameter order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lstm import LstmParams, flatten, n_params, unflatten

BitString = str
DEFAULT_MAX_DEN = 1000


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at bit {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Rational:
    sign: int
    num: int
    den: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if self.num < 0 or self.den < 1:
            raise ValueError(f"bad fraction {self.num}/{self.den}")
        if math.gcd(self.num, self.den) != 1:
            raise ValueError(f"{self.num}/{self.den} is not in lowest terms")
        if self.num == 0 and (self.sign, self.den) != (1, 1):
            raise ValueError("zero must be represented as +0/1")

    @classmethod
    def of(cls, num: int, den: int = 1) -> Rational:
        """Normalized constructor accepting signed numerators."""
        if den == 0:
            raise ZeroDivisionError("zero denominator")
        if den < 0:
            num, den = -num, -den
        if num == 0:
            return cls(1, 0, 1)
        g = math.gcd(num, den)
        return cls(1 if num > 0 else -1, abs(num) // g, den // g)

    def __float__(self) -> float:
        return self.sign * (self.num / self.den)

    def __str__(self) -> str:
        return f"{'+' if self.sign > 0 else '-'}{self.num}/{self.den}"


# integers

def encode_int(n: int) -> BitString:
    if n < 1:
        raise ValueError(f"encode_int needs n >= 1, got {n}")
    binary = format(n, "b")
    return "1" * len(binary) + "0" + binary


def int_code_length(n: int) -> int:
    return 2 * max(n.bit_length(), 1) + 1


def _decode_uint(bits: str, pos: int, allow_zero: bool) -> tuple[int, int]:
    start = pos
    width = 0
    while pos < len(bits) and bits[pos] == "1":
        width += 1
        pos += 1
    if pos >= len(bits):
        raise DecodeError("stream ended inside a length prefix", start)
    if width == 0:
        raise DecodeError("empty length prefix", start)
    pos += 1  # separator
    if pos + width > len(bits):
        raise DecodeError("stream ended inside an integer body", pos)
    body = bits[pos:pos + width]
    value = int(body, 2)
    if value == 0 and not (allow_zero and width == 1):
        raise DecodeError("zero is only valid as a numerator", pos)
    if value and body[0] != "1":
        raise DecodeError("integer body has a leading zero", pos)
    return value, pos + width


def decode_int(bits: BitString, pos: int = 0) -> tuple[int, int]:
    """Decode one positive integer at ``pos``; return ``(value, next_pos)``."""
    return _decode_uint(bits, pos, allow_zero=False)


# rationals

def encode_rational(w: Rational) -> BitString:
    num = "100" if w.num == 0 else encode_int(w.num)
    return ("1" if w.sign > 0 else "0") + num + encode_int(w.den)


def rational_code_length(w: Rational) -> int:
    return 1 + int_code_length(w.num) + int_code_length(w.den)


def decode_rational(bits: BitString, pos: int = 0) -> tuple[Rational, int]:
    if pos >= len(bits):
        raise DecodeError("stream ended before a sign bit", pos)
    sign = 1 if bits[pos] == "1" else -1
    num, pos = _decode_uint(bits, pos + 1, allow_zero=True)
    den_pos = pos
    den, pos = decode_int(bits, pos)
    try:
        return Rational(sign, num, den), pos
    except ValueError as exc:
        raise DecodeError(str(exc), den_pos) from None


def _closer(P: int, Q: int, a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    """Pick the candidate nearer to P/Q; ties go to the smaller denominator, then numerator."""
    (pa, qa), (pb, qb) = a, b
    # |P/Q - p/q| compared as |P*q - p*Q| / q
    da = abs(P * qa - pa * Q) * qb
    db = abs(P * qb - pb * Q) * qa
    if da != db:
        return a if da < db else b
    return min(a, b, key=lambda r: (r[1], r[0]))


def rationalize(x: float, max_den: int = DEFAULT_MAX_DEN) -> Rational:
    """Closest rational to ``x`` with denominator at most ``max_den``.

    Walks the continued-fraction expansion of the exact binary value of ``x``
    and compares the last convergent with the best semiconvergent.
    """
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot rationalize non-finite value {x}")
    if max_den < 1:
        raise ValueError("max_den must be >= 1")
    sign = -1 if x < 0 else 1
    P, Q = abs(x).as_integer_ratio()
    if Q <= max_den:
        return Rational.of(sign * P, Q)
    p0, q0, p1, q1 = 0, 1, 1, 0
    n, d = P, Q
    while True:
        a = n // d
        q2 = q0 + a * q1
        if q2 > max_den:
            break
        p0, q0, p1, q1 = p1, q1, p0 + a * p1, q2
        n, d = d, n - a * d
    k = (max_den - q0) // q1
    semi = (p0 + k * p1, q0 + k * q1)
    num, den = _closer(P, Q, (p1, q1), semi)
    return Rational.of(sign * num, den)


def rationalize_brute(x: float, max_den: int = DEFAULT_MAX_DEN) -> Rational:
    """Exhaustive search over every denominator; slow reference for tests."""
    sign = -1 if x < 0 else 1
    P, Q = abs(float(x)).as_integer_ratio()
    best = None
    for den in range(1, max_den + 1):
        lo = (P * den) // Q
        for num in (lo, lo + 1):
            cand = (num, den)
            best = cand if best is None else _closer(P, Q, best, cand)
    num, den = best
    return Rational.of(sign * num, den)


# networks

def encode_network(params: LstmParams, max_den: int = DEFAULT_MAX_DEN) -> BitString:
    parts = [encode_int(params.hidden_size)]
    parts.extend(encode_rational(rationalize(w, max_den)) for w in flatten(params))
    return "".join(parts)


def description_length(params: LstmParams, max_den: int = DEFAULT_MAX_DEN) -> int:
    """|H| in bits; equals ``len(encode_network(params, max_den))``."""
    return int_code_length(params.hidden_size) + sum(
        rational_code_length(rationalize(w, max_den)) for w in flatten(params).tolist()
    )


def decode_network(bits: BitString) -> LstmParams:
    if bits.strip("01"):
        raise DecodeError("stream contains characters other than 0/1", 0)
    h, pos = decode_int(bits, 0)
    values = np.empty(n_params(h))
    for k in range(values.size):
        w, pos = decode_rational(bits, pos)
        values[k] = float(w)
    if pos != len(bits):
        raise DecodeError(f"{len(bits) - pos} trailing bits after the last weight", pos)
    return unflatten(values, h)


def rationalize_params(params: LstmParams, max_den: int = DEFAULT_MAX_DEN) -> LstmParams:
    """Project every weight onto its rational approximation."""
    values = np.array([float(rationalize(w, max_den)) for w in flatten(params).tolist()])
    return unflatten(values, params.hidden_size)


# packed file form: MSB-first bytes, zero-padded, bit length in a sidecar

def pack_bits(bits: BitString) -> bytes:
    if not bits:
        return b""
    padded = bits + "0" * (-len(bits) % 8)
    return int(padded, 2).to_bytes(len(padded) // 8, "big")


def unpack_bits(data: bytes, n_bits: int) -> BitString:
    if n_bits > 8 * len(data):
        raise DecodeError("sidecar length exceeds packed data", 8 * len(data))
    if not data:
        return ""
    return format(int.from_bytes(data, "big"), f"0{8 * len(data)}b")[:n_bits]


def write_bitstream(bits: BitString, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(pack_bits(bits))
    sidecar = path.with_name(path.name + ".bits")
    sidecar.write_text(f"{len(bits)}\n")
    return sidecar


def read_bitstream(path: str | Path) -> BitString:
    path = Path(path)
    n_bits = int(path.with_name(path.name + ".bits").read_text().strip())
    return unpack_bits(path.read_bytes(), n_bits)
