"""Bit-level float codec and the summation frame.

Two representations of a finite binary float appear throughout:

* PlainFloat — the raw IEEE fields (sign b, fraction v < 2^m, biased
  exponent p < 2^e - 1). Infinities and NaNs are rejected at decode.

* the summation frame — a (b, v, p) triple positioned on the accumulator
  grid. Grid position g carries weight 2^(g + G) with G = -(2^(e-1)+1+m),
  i.e. three positions below the format's subnormal LSB. For p >= 1 the
  value is (-1)^b * (2^m + v) * 2^(p + G) (implicit leading one, mantissa
  LSB at grid position p); IEEE normals map in with p = E + 2. For p = 0
  the value is (-1)^b * v * 2^G with no implicit bit; IEEE subnormals map
  in as v = f << 3. Sums can produce frames outside IEEE's range (p in
  {1, 2}, wide v at p = 0); converting back to IEEE bits raises for those.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class PlainFloat:
    b: int  # sign bit
    v: int  # fraction field, < 2^m
    p: int  # biased exponent field, < 2^e - 1
    e: int  # format exponent bits
    m: int  # format fraction bits

    def __post_init__(self):
        if not 0 <= self.v < (1 << self.m):
            raise ValueError("fraction field out of range")
        if not 0 <= self.p < (1 << self.e) - 1:
            raise ValueError("exponent field out of range (finite floats only)")
        if self.b not in (0, 1):
            raise ValueError("bad sign bit")


def grid_offset(e: int, m: int) -> int:
    return -((1 << (e - 1)) + 1 + m)


def ieee_decode(bits: int, e: int, m: int) -> PlainFloat:
    """Split an IEEE bit pattern into fields; rejects Inf/NaN."""
    width = 1 + e + m
    if not 0 <= bits < (1 << width):
        raise ValueError("bit pattern out of range")
    b = bits >> (e + m)
    p = (bits >> m) & ((1 << e) - 1)
    v = bits & ((1 << m) - 1)
    if p == (1 << e) - 1:
        raise ValueError("not a finite float")
    return PlainFloat(b=b, v=v, p=p, e=e, m=m)


def ieee_encode(pf: PlainFloat) -> int:
    return (pf.b << (pf.e + pf.m)) | (pf.p << pf.m) | pf.v


def to_frame(pf: PlainFloat) -> tuple[int, int, int]:
    """IEEE fields -> summation frame (b, v, p)."""
    if pf.p == 0:
        return (pf.b, pf.v << 3, 0)
    return (pf.b, pf.v, pf.p + 2)


def from_frame(b: int, v: int, p: int, e: int, m: int) -> PlainFloat:
    """Summation frame -> IEEE fields.

    Raises ValueError when the frame holds a value the IEEE format cannot
    represent exactly (possible for computed sums: grid bits below the
    subnormal LSB, or an (m+1)-bit significand at p = 0).
    """
    if p >= 3:
        if p > (1 << e):
            raise ValueError("exponent above format range")
        if v >= (1 << m):
            raise ValueError("fraction field too wide for a normal")
        return PlainFloat(b=b, v=v, p=p - 2, e=e, m=m)
    # The remaining frames live at or below IEEE's subnormal scale: value
    # is N * 2^G with N = (2^m + v) << p for p in {1, 2}, N = v for p = 0.
    n = ((1 << m) + v) << p if p >= 1 else v
    if n & 7:
        raise ValueError("value has bits below the subnormal LSB")
    f = n >> 3
    if f >= (1 << m):
        raise ValueError("significand too wide for a subnormal")
    return PlainFloat(b=b, v=f, p=0, e=e, m=m)


def frame_grid_int(b: int, v: int, p: int, m: int) -> int:
    """Signed integer N such that the frame's value is N * 2^G."""
    mag = (((1 << m) + v) << p) if p >= 1 else v
    return -mag if b else mag


def grid_int_to_frame(n: int, m: int) -> tuple[int, int, int]:
    """Nearest-below frame for an exact grid integer (truncation toward zero).

    The significand keeps the leading m+1 bits; anything below is dropped.
    A value whose leading bit sits at position <= m is exact with p = 0.
    """
    if n == 0:
        return (0, 0, 0)
    b = 1 if n < 0 else 0
    a = abs(n)
    lead = a.bit_length() - 1
    if lead <= m:
        return (b, a, 0)
    p = lead - m
    return (b, (a >> p) - (1 << m), p)


def frame_value(b: int, v: int, p: int, e: int, m: int) -> Fraction:
    """Exact rational value of a summation frame."""
    g = grid_offset(e, m)
    n = frame_grid_int(b, v, p, m)
    return Fraction(n) * Fraction(2) ** g


def pf_value(pf: PlainFloat) -> Fraction:
    return frame_value(*to_frame(pf), pf.e, pf.m)


def float_bits(x: float, e: int, m: int) -> int:
    """IEEE bit pattern of a Python float in a 32- or 64-bit format."""
    if (e, m) == (8, 23):
        return struct.unpack("<I", struct.pack("<f", x))[0]
    if (e, m) == (11, 52):
        return struct.unpack("<Q", struct.pack("<d", x))[0]
    raise ValueError("only binary32/binary64 have native Python floats")


def bits_float(bits: int, e: int, m: int) -> float:
    if (e, m) == (8, 23):
        return struct.unpack("<f", struct.pack("<I", bits))[0]
    if (e, m) == (11, 52):
        return struct.unpack("<d", struct.pack("<Q", bits))[0]
    raise ValueError("only binary32/binary64 have native Python floats")


def float_to_frame(x: float, e: int, m: int) -> tuple[int, int, int]:
    return to_frame(ieee_decode(float_bits(x, e, m), e, m))


def frame_to_float(b: int, v: int, p: int, e: int, m: int) -> float:
    return bits_float(ieee_encode(from_frame(b, v, p, e, m)), e, m)
