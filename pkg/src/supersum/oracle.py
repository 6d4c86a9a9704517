"""Plaintext reference pipeline for exact float summation.

Every secure protocol stage has a plaintext mirror here, computing the
same function on cleartext values with ordinary integers — same block
layout, same split points, same truncation behavior, bit for bit. The two
independent non-mirror references (`expand_and_sum` on big integers and
`exact_sum` on rationals) close the loop: mirror results must also equal
the exactly-rounded-toward-zero true sum.

Superaccumulators are little-endian lists of alpha signed blocks; block i
(0-based) carries weight 2^(w*i + G) with G the grid offset. A superacc is
regularized when every block lies strictly inside (-2^w, 2^w).
"""

from __future__ import annotations

from fractions import Fraction

from supersum.codec import frame_grid_int, grid_int_to_frame, grid_offset
from supersum.params import FpParams


def superacc_value(blocks: list[int], prm: FpParams) -> int:
    """Grid integer held by a superaccumulator (value = N * 2^G)."""
    return sum(y << (prm.w * i) for i, y in enumerate(blocks))


def plain_fl2sa(frame: tuple[int, int, int], prm: FpParams) -> list[int]:
    """Spread one summation-frame float onto the accumulator grid."""
    b, v, p = frame
    if not 0 <= p <= prm.p_max:
        raise ValueError("exponent out of grid range")
    p_high = p >> prm.gamma
    p_low = p & (prm.w - 1)
    mant = v + ((1 << prm.m) if p != 0 else 0)
    sign = -1 if b else 1
    acc = [0] * prm.alpha
    for u in range(prm.beta):  # block u of the shifted mantissa window
        lo = prm.w * u - p_low
        if lo >= 0:
            blk = (mant >> lo) & ((1 << prm.w) - 1)
        else:
            blk = (mant << -lo) & ((1 << prm.w) - 1)
        idx = p_high + u
        if idx < prm.alpha:
            acc[idx] += sign * blk
        else:
            # only the p = p_max edge reaches here and its spill is empty
            assert blk == 0
    return acc


def plain_regularize(cols: list[int], prm: FpParams) -> tuple[list[int], int]:
    """Carry-propagate block sums back into regularized range.

    Splits |column| = carry * 2^w + r with the remainder balanced around
    zero (round-to-nearest carry, r in [-2^(w-1), 2^(w-1))), re-signs both
    halves with their own column's sign, and adds each carry into the next
    block up. The carry lands at the next block's radix, so the total value
    telescopes exactly; with column sums bounded by 2^(w-2) * (2^w - 1) the
    carry stays <= 2^(w-2), hence |block| <= 2^(w-1) + 2^(w-2) < 2^w and a
    single pass regularizes. Returns the regularized blocks and the signed
    carry dropped off the top (nonzero only when the accumulated sum
    overflows the grid).
    """
    out = [0] * prm.alpha
    sigma_prev, carry = 1, 0
    for i, s in enumerate(cols):
        sigma = -1 if s < 0 else 1
        a = abs(s)
        nxt = (a + (1 << (prm.w - 1))) >> prm.w
        r = a - (nxt << prm.w)
        out[i] = sigma * r + sigma_prev * carry
        sigma_prev, carry = sigma, nxt
    return out, sigma_prev * carry


def plain_sasum(supers: list[list[int]], prm: FpParams) -> list[int]:
    """Sum up to 2^(w-2) regularized superaccumulators, regularized result."""
    n = len(supers)
    if not 1 <= n <= (1 << (prm.w - 2)):
        raise ValueError("superaccumulator count out of range")
    cols = [sum(s[i] for s in supers) for i in range(prm.alpha)]
    out, dropped = plain_regularize(cols, prm)
    assert dropped == 0, "sum overflows the accumulator grid"
    return out


def plain_normalize(window: list[int], sticky: int, prm: FpParams) -> tuple[int, int, int]:
    """Truncate a beta-block signed window to (sign, significand, p').

    `sticky` in {-1, 0, +1} is the sign of whatever value sits below the
    window in the full accumulator. It rides one position under the window
    (W = 2*window + sticky over L = l+2 bits) so that an opposite-signed
    tail borrows out of the kept significand exactly as it would in the
    full-width subtraction. That makes the output the truncation of the
    complete sum, not just of the extracted window.

    Mirrors the shared-bit construction: two's-complement sign at bit l+1,
    absolute value, one-hot leading-one markers over positions l..m+1
    (saturating marker at m), and significand extraction offset one bit up
    to undo the doubling. Markers at m+1 and m both yield p' = 0; the
    marker at m+1 contributes the significand's bit m, which is how an
    exponent-0 result comes to carry m+1 significand bits.
    """
    w, m, l, beta = prm.w, prm.m, prm.l, prm.beta
    assert len(window) == beta and sticky in (-1, 0, 1)
    val = 2 * sum(y << (w * i) for i, y in enumerate(window)) + sticky
    big = 1 << (l + 2)
    assert -(big >> 1) < val < (big >> 1)
    s_mod = val % big
    sign = (s_mod >> (l + 1)) & 1
    a = ((s_mod ^ (big - 1)) + 1) % big if sign else s_mod  # |val|
    c = [(a >> j) & 1 for j in range(l + 1)]
    d = [0] * (l + 2)  # d[i] = OR of c[l..i], for i in [m+1, l]
    for i in range(l, m, -1):
        d[i] = c[i] | d[i + 1]
    z = [0] * (l + 1)  # one-hot leading-one position, saturated at m
    z[l] = d[l]
    for i in range(m + 1, l):
        z[i] = d[i] - d[i + 1]
    z[m] = 1 - d[m + 1]
    # Row coefficients: index j reads bit c[i+1+j] into significand bit i.
    # Row 0 (markers m and m+1) is the p' = 0 regime reading A>>1 directly.
    zz = [z[m] + z[m + 1]] + [z[m + 1 + j] for j in range(1, l - m)]
    u = [0] * m
    for i in range(m):
        u[i] = sum(zz[j] * c[i + 1 + j] for j in range(l - m))
    v_int = sum(bit << i for i, bit in enumerate(u)) + (z[m + 1] << m)
    p_prime = sum(j * zz[j] for j in range(1, l - m))
    return sign, v_int, p_prime


def plain_sa2fl(blocks: list[int], prm: FpParams) -> tuple[int, int, int]:
    """Extract the top nonzero window of a regularized superacc as a frame."""
    alpha, beta, w = prm.alpha, prm.beta, prm.w
    assert len(blocks) == alpha
    cz = {i: int(blocks[i - 1] == 0) for i in range(1, alpha + 1)}
    d = {}  # d[i] = AND of cz[alpha..i]
    for i in range(alpha, beta, -1):
        d[i] = cz[i] & d.get(i + 1, 1)
    u = {beta: d[beta + 1], alpha: 1 - d[alpha]}
    for i in range(beta + 1, alpha):
        u[i] = d[i + 1] - d[i]
    window = [
        sum(u[j + beta - i] * blocks[j - 1] for j in range(i, alpha - beta + i + 1))
        for i in range(1, beta + 1)
    ]
    # Sign of the tail below the window: the topmost nonzero block not
    # covered by the window dominates everything under it, so its sign is
    # the tail's sign. below[i] = 1 iff block i is below the window.
    below = {i: 1 - d[i + beta] for i in range(1, alpha - beta + 1)}
    sticky = 0
    for i in range(alpha - beta, 0, -1):
        if below[i] and not cz[i]:
            sticky = -1 if blocks[i - 1] < 0 else 1
            break
    sign, v_int, p_prime = plain_normalize(window, sticky, prm)
    p = p_prime + w * sum(u[t] * (t - beta) for t in range(beta, alpha + 1))
    return sign, v_int, p


def chunked(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def plain_flsum(
    frames: list[tuple[int, int, int]], prm: FpParams, group_cap: int | None = None
) -> tuple[int, int, int]:
    """Full plaintext pipeline: spread, layered summation, extract."""
    if not frames:
        raise ValueError("empty input")
    cap = (1 << (prm.w - 2)) if group_cap is None else group_cap
    supers = [plain_fl2sa(f, prm) for f in frames]
    while len(supers) > 1:
        supers = [plain_sasum(grp, prm) for grp in chunked(supers, cap)]
    acc = supers[0] if len(frames) > 1 else plain_sasum(supers, prm)
    return plain_sa2fl(acc, prm)


def expand_and_sum(
    frames: list[tuple[int, int, int]], prm: FpParams
) -> tuple[int, int, int]:
    """Reference sum: expand each float to a big fixed-point integer on the
    grid, add exactly, truncate back. No blocks, no carries — just ints."""
    total = sum(frame_grid_int(b, v, p, prm.m) for b, v, p in frames)
    return grid_int_to_frame(total, prm.m)


def exact_sum(
    frames: list[tuple[int, int, int]], prm: FpParams
) -> tuple[Fraction, tuple[int, int, int]]:
    """Reference sum via exact rationals; returns (true sum, truncated frame)."""
    g = grid_offset(prm.e, prm.m)
    total = sum(
        (Fraction(frame_grid_int(b, v, p, prm.m)) * Fraction(2) ** g for b, v, p in frames),
        start=Fraction(0),
    )
    n = total / Fraction(2) ** g
    assert n.denominator == 1
    return total, grid_int_to_frame(n.numerator, prm.m)
