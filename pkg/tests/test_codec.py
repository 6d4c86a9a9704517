import math
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supersum.codec import (
    PlainFloat,
    bits_float,
    float_bits,
    float_to_frame,
    frame_grid_int,
    frame_to_float,
    frame_value,
    from_frame,
    grid_int_to_frame,
    grid_offset,
    ieee_decode,
    ieee_encode,
    to_frame,
)

S = (8, 23)
D = (11, 52)


def test_one_maps_to_129():
    assert float_to_frame(1.0, *S) == (0, 0, 129)
    assert float_to_frame(1.0, *D) == (0, 0, 1025)


def test_frame_examples():
    assert float_to_frame(2.0**-30, *S) == (0, 0, 99)
    assert float_to_frame(-1.0, *S) == (1, 0, 129)
    assert float_to_frame(1.5, *S) == (0, 1 << 22, 129)
    # smallest subnormal lands at grid position 3 (three spare low bits)
    assert float_to_frame(2.0**-149, *S) == (0, 8, 0)
    assert float_to_frame(2.0**-1074, *D) == (0, 8, 0)


def test_signed_zero():
    assert float_to_frame(0.0, *S) == (0, 0, 0)
    assert float_to_frame(-0.0, *S) == (1, 0, 0)
    assert frame_to_float(1, 0, 0, *S) == 0.0
    assert math.copysign(1.0, frame_to_float(1, 0, 0, *S)) == -1.0


def test_max_finite():
    assert to_frame(ieee_decode(0x7F7FFFFF, *S)) == (0, (1 << 23) - 1, 256)
    assert frame_to_float(0, (1 << 23) - 1, 256, *S) == struct.unpack(
        "<f", struct.pack("<I", 0x7F7FFFFF)
    )[0]


def test_rejects_inf_nan():
    for bits in (0x7F800000, 0xFF800000, 0x7FC00001):
        with pytest.raises(ValueError):
            ieee_decode(bits, *S)


def test_grid_offset():
    assert grid_offset(*S) == -152
    assert grid_offset(*D) == -1077


def test_frame_grid_int():
    # normals carry the implicit bit, exponent is the shift
    assert frame_grid_int(0, 0, 129, 23) == (1 << 23) << 129
    assert frame_grid_int(1, 0, 129, 23) == -((1 << 23) << 129)
    # p = 0 is a raw grid integer
    assert frame_grid_int(0, 5, 0, 23) == 5
    assert frame_grid_int(1, 0, 0, 23) == 0


def test_frame_value_exactness():
    v = frame_value(0, 0, 99, *S)
    assert v == pytest.approx(2.0**-30)
    assert float(v) == 2.0**-30


def test_grid_int_truncates_toward_zero():
    m = 23
    # 25-bit odd integer: keep top 24 bits, drop the rest
    n = (1 << 24) + 1
    assert grid_int_to_frame(n, m) == (0, 0, 1)
    assert grid_int_to_frame(-n, m) == (1, 0, 1)
    # anything m+1 bits or narrower is exact at p = 0
    assert grid_int_to_frame((1 << m) + 3, m) == (0, (1 << m) + 3, 0)
    assert grid_int_to_frame(0, m) == (0, 0, 0)


def test_from_frame_rejects_sub_grid_values():
    # a p=1 frame has its mantissa LSB one position below any IEEE value
    with pytest.raises(ValueError):
        from_frame(0, 1, 1, *S)
    # exponent-0 frame with set bits below the subnormal LSB
    with pytest.raises(ValueError):
        from_frame(0, (1 << 23) + 1, 0, *S)
    # exponent-0 frame too wide even after the 3-bit rescale
    with pytest.raises(ValueError):
        from_frame(0, 1 << 26, 0, *S)
    with pytest.raises(ValueError):
        from_frame(0, 0, (1 << 8) + 1, *S)


def test_from_frame_accepts_borderline():
    # v divisible by 8 at p = 0 is a genuine subnormal
    pf = from_frame(0, 8, 0, *S)
    assert (pf.b, pf.v, pf.p) == (0, 1, 0)
    # p = 2 with three low zero bits folds back into the subnormal range
    pf = from_frame(0, 0, 2, *S)
    assert pf.p == 0 and pf.v == 1 << 22


def test_plainfloat_validation():
    with pytest.raises(ValueError):
        PlainFloat(b=0, v=1 << 23, p=1, e=8, m=23)
    with pytest.raises(ValueError):
        PlainFloat(b=0, v=0, p=255, e=8, m=23)  # Inf/NaN field
    with pytest.raises(ValueError):
        PlainFloat(b=2, v=0, p=1, e=8, m=23)


finite32 = st.integers(0, (1 << 32) - 1).filter(
    lambda b: (b >> 23) & 0xFF != 0xFF
)
finite64 = st.integers(0, (1 << 64) - 1).filter(
    lambda b: (b >> 52) & 0x7FF != 0x7FF
)


@settings(max_examples=400)
@given(finite32)
def test_roundtrip_bits32(bits):
    pf = ieee_decode(bits, *S)
    assert ieee_encode(from_frame(*to_frame(pf), *S)) == bits
    # value agreement with the native float (0.0 == -0.0 covers the zeros)
    assert float(frame_value(*to_frame(pf), *S)) == bits_float(bits, *S)


@settings(max_examples=400)
@given(finite64)
def test_roundtrip_bits64(bits):
    pf = ieee_decode(bits, *D)
    assert ieee_encode(from_frame(*to_frame(pf), *D)) == bits
    assert float(frame_value(*to_frame(pf), *D)) == bits_float(bits, *D)


@settings(max_examples=300)
@given(st.integers(-(1 << 60), 1 << 60), st.sampled_from([23, 52]))
def test_grid_int_frame_properties(n, m):
    b, v, p = grid_int_to_frame(n, m)
    back = frame_grid_int(b, v, p, m)
    # truncation toward zero: same sign, never larger in magnitude
    assert abs(back) <= abs(n)
    assert back == 0 or (back < 0) == (n < 0)
    # at most m+1 significand bits survive
    sig = v if p == 0 else (1 << m) + v
    assert sig < 1 << (m + 1)
    # the kept bits are exactly the top ones: dropping low bits of n gives back
    if n != 0 and abs(n).bit_length() - 1 > m:
        cut = abs(n).bit_length() - 1 - m
        assert abs(back) == (abs(n) >> cut) << cut


def test_float_bits_width_guard():
    with pytest.raises(ValueError):
        float_bits(1.0, 5, 10)
    with pytest.raises(ValueError):
        bits_float(0, 15, 112)
