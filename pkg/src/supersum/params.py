"""Parameter derivation for the superaccumulator float-summation pipeline.

A binary float format is (e, m): e exponent bits, m fraction bits. The
superaccumulator covers the full dynamic range of the format on a fixed
grid of alpha blocks of w bits each; all secure arithmetic runs over
Z_{2^k} with k = 2w so that a block product/sum never wraps.
"""

from __future__ import annotations

from dataclasses import dataclass

# IEEE interchange formats by short name: (exponent bits, fraction bits)
FORMATS = {
    "half": (5, 10),
    "single": (8, 23),
    "double": (11, 52),
    "quad": (15, 112),
}


@dataclass(frozen=True)
class FpParams:
    """Derived sizes for one (format, block width) configuration."""

    e: int  # exponent field bits
    m: int  # fraction field bits
    w: int  # superaccumulator block width (payload bits per block)
    alpha: int  # number of superaccumulator blocks
    beta: int  # number of blocks a shifted mantissa can straddle
    gamma: int  # log2(w)
    delta: int  # ceil(log2(alpha))
    k: int  # ring width for shared arithmetic, k = 2w
    l: int  # w * beta, bit width of a mantissa window

    @property
    def bias(self) -> int:
        """IEEE exponent bias, 2^(e-1) - 1."""
        return (1 << (self.e - 1)) - 1

    @property
    def grid_offset(self) -> int:
        """Grid position g carries weight 2^(g + grid_offset)."""
        return -((1 << (self.e - 1)) + 1 + self.m)

    @property
    def p_max(self) -> int:
        """Largest storable exponent field value (needs e+1 bits)."""
        return 1 << self.e

    @property
    def e_bits(self) -> int:
        """Bit width used for exponent-domain arithmetic."""
        return self.e + 1


def derive_params(precision: str | tuple[int, int], w: int) -> FpParams:
    """Derive all pipeline sizes for a float format and block width.

    `precision` is a format name from FORMATS or an (e, m) pair. `w` must be
    a power of two with 2w <= 64 so a block fits a machine word with room
    for a full product.
    """
    if isinstance(precision, str):
        try:
            e, m = FORMATS[precision]
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}") from None
    else:
        e, m = precision
    if e < 2 or m < 2:
        raise ValueError("format too small")
    if w < 4 or (w & (w - 1)) != 0:
        raise ValueError("w must be a power of two >= 4")
    if 2 * w > 64:
        raise ValueError("ring width 2w exceeds 64 bits")

    gamma = w.bit_length() - 1
    alpha = -(-((1 << e) + m) // w)
    beta = -(-(m + 1) // w) + 1
    delta = (alpha - 1).bit_length()
    params = FpParams(
        e=e, m=m, w=w, alpha=alpha, beta=beta, gamma=gamma, delta=delta,
        k=2 * w, l=w * beta,
    )
    # A shifted (m+1)-bit significand must fit beta-1 blocks with the shift,
    # and the widest exponent-0 significand the codec emits (m+3 bits) must
    # fit beta-1 blocks unshifted.
    assert (m + 1) + (w - 1) <= w * (beta - 1) + w
    assert m + 3 <= w * (beta - 1), "block window too narrow for the format"
    assert params.e_bits <= params.k
    return params
