"""Mid-level blocks on shares: comparison, truncation, bit decomposition,
prefix circuits, the one-hot disjunction table, and ring up-conversion.

Most of these follow one masking pattern: add a random value r known in
both arithmetic and bit-decomposed form (edabit), open the sum, then fix
the result up over Z_2 with a borrow/carry prefix circuit against the
public opened value.
"""

from __future__ import annotations

import numpy as np

from .primitives import b2a, bit_and, edabit, ks_scan, map_subs, open_shares
from .ring import BitShare, RssShare, mod_switch_local

__all__ = [
    "sub_public_bits",
    "bitdec",
    "eqz",
    "msb",
    "trunc",
    "prefix_and",
    "prefix_or",
    "all_or",
    "convert",
]


def _edabit_shaped(ctx, nbits, k, shape):
    shape = tuple(shape)
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    out = edabit(ctx, nbits, k, count)
    arith = map_subs(out.arithmetic, lambda s: s.reshape(shape))
    bits = map_subs(out.bits, lambda s: s.reshape(shape + (nbits,)))
    return arith, bits


def _public_bits_of(c, ell):
    shifts = np.arange(ell, dtype=np.uint64)
    return ((np.asarray(c, dtype=np.uint64)[..., None] >> shifts) & np.uint64(1)).astype(np.uint8)


def sub_public_bits(ctx, c, r: BitShare):
    """Bitwise c - r for public c and shared bits r (LSB first).

    Returns (diff, borrows): diff[..., i] is bit i of (c - r) mod 2^ell and
    borrows[..., i] is the borrow into position i, so borrows[..., ell] is
    the sign of the subtraction, i.e. [c < r].  One log-depth prefix scan;
    downstream blocks read several positions off the same chain.
    """
    ell = r.shape[-1]
    cb = _public_bits_of(c, ell)
    ncb = (1 - cb).astype(np.uint8)
    g = map_subs(r, lambda s: s & ncb)  # borrow generated: r_i AND NOT c_i
    p = ctx.xor_public(r, ncb)  # borrow propagates: c_i == r_i
    gs, _ = ks_scan(ctx, g, p)
    borrows = map_subs(gs, lambda s: np.concatenate(
        [np.zeros_like(s[..., :1]), s], axis=-1))
    diff = ctx.flip(p) ^ map_subs(borrows, lambda s: s[..., :ell])
    return diff, borrows


def bitdec(ctx, x: RssShare, ell: int) -> BitShare:
    """Bits of x (LSB first), for x < 2^ell."""
    with ctx.scoped("bitdec"):
        ra, rb = _edabit_shaped(ctx, ell, x.k, x.shape)
        c = open_shares(ctx, x + ra, ell)
        diff, _ = sub_public_bits(ctx, c, rb)
        return diff


def eqz(ctx, a: RssShare, ell: int) -> BitShare:
    """[a == 0] as a shared bit, for a holding an ell-bit value."""
    with ctx.scoped("eqz"):
        ra, rb = _edabit_shaped(ctx, ell, a.k, a.shape)
        c = open_shares(ctx, a + ra, ell)
        # a == 0 iff the mask reappears unchanged: every bit of r matches c
        e = ctx.flip(ctx.xor_public(rb, _public_bits_of(c, ell)))
        return _and_fold(ctx, e)


def _and_fold(ctx, x: BitShare) -> BitShare:
    """AND-reduce over the last axis (L-1 gates, ceil(log2 L) rounds)."""
    L = x.shape[-1]
    while L > 1:
        h = L // 2
        t = bit_and(ctx, map_subs(x, lambda s: s[..., :h]),
                    map_subs(x, lambda s: s[..., h:2 * h]))
        if L % 2:
            t = BitShare.concat([t, map_subs(x, lambda s: s[..., 2 * h:])], axis=-1)
        x = t
        L = x.shape[-1]
    return map_subs(x, lambda s: s[..., 0])


def msb(ctx, a: RssShare) -> BitShare:
    """Top bit of a, i.e. [a < 0] in two's complement."""
    k = a.k
    with ctx.scoped("msb"):
        ra, rb = _edabit_shaped(ctx, k, k, a.shape)
        c = open_shares(ctx, a + ra, k)
        diff, _ = sub_public_bits(ctx, c, rb)
        return map_subs(diff, lambda s: s[..., k - 1])


def trunc(ctx, x: RssShare, ell: int, u: int) -> RssShare:
    """Exact floor(x / 2^u) for 0 <= x < 2^ell (u <= ell <= k).

    Masks the low and high parts separately so one borrow chain yields both
    correction bits: w = [c < r] undoes the mod-2^ell wrap of the opening
    and b = [c_low < r_low] fixes the floor of the low part.  Violating the
    precondition is not detected.
    """
    k = x.k
    assert 0 <= u <= ell <= k
    with ctx.scoped("trunc"):
        if u == 0:
            return x
        if u == ell:
            return ctx.public_arith(0, k, x.shape)
        rh_a, rh_b = _edabit_shaped(ctx, ell - u, k, x.shape)
        rl_a, rl_b = _edabit_shaped(ctx, u, k, x.shape)
        c = open_shares(ctx, x + (rh_a << u) + rl_a, ell)
        rbits = BitShare.concat([rl_b, rh_b], axis=-1)
        _, borrows = sub_public_bits(ctx, c, rbits)
        wb = map_subs(borrows, lambda s: s[..., ell:ell + 1])
        bb = map_subs(borrows, lambda s: s[..., u:u + 1])
        conv = b2a(ctx, BitShare.concat([wb, bb], axis=-1), k)
        wa = map_subs(conv, lambda s: s[..., 0])
        ba = map_subs(conv, lambda s: s[..., 1])
        return ctx.add_public((wa << (ell - u)) - ba - rh_a, c >> np.uint64(u))


def prefix_and(ctx, xs: BitShare) -> BitShare:
    """y_i = AND of x_0..x_i along the last axis."""
    if xs.shape[-1] == 0:
        raise ValueError("empty input")
    with ctx.scoped("prefix_and"):
        return _prefix_and_inner(ctx, xs)


def _prefix_and_inner(ctx, xs: BitShare) -> BitShare:
    L = xs.shape[-1]
    x = xs
    d = 1
    while d < L:
        upd = bit_and(ctx, map_subs(x, lambda s: s[..., d:]),
                      map_subs(x, lambda s: s[..., :L - d]))
        x = BitShare.concat([map_subs(x, lambda s: s[..., :d]), upd], axis=-1)
        d *= 2
    return x


def prefix_or(ctx, xs: BitShare) -> BitShare:
    """y_i = OR of x_0..x_i along the last axis."""
    if xs.shape[-1] == 0:
        raise ValueError("empty input")
    with ctx.scoped("prefix_or"):
        return ctx.flip(_prefix_and_inner(ctx, ctx.flip(xs)))


def all_or(ctx, xs: BitShare) -> BitShare:
    """From q bits (MSB first) to 2^q bits: output[j] = OR_i (x_i XOR j_i).

    Exactly one output is 0, at the index xs encodes.  Recursive halving:
    combining the tables of the two halves costs one AND per output cell.
    """
    q = xs.shape[-1]
    if q > 12:
        raise ValueError(f"all_or limited to 12 input bits, got {q}")
    with ctx.scoped("all_or"):
        return _all_or_rec(ctx, xs)


def _all_or_rec(ctx, xs: BitShare) -> BitShare:
    q = xs.shape[-1]
    if q == 1:
        return BitShare.concat([xs, ctx.flip(xs)], axis=-1)
    qh = q // 2
    hi = _all_or_rec(ctx, map_subs(xs, lambda s: s[..., :qh]))
    lo = _all_or_rec(ctx, map_subs(xs, lambda s: s[..., qh:]))
    na, nb = 1 << qh, 1 << (q - qh)
    batch = xs.shape[:-1]
    full = batch + (na, nb)
    hi_e = map_subs(hi, lambda s: np.broadcast_to(s[..., :, None], full))
    lo_e = map_subs(lo, lambda s: np.broadcast_to(s[..., None, :], full))
    t = bit_and(ctx, hi_e, lo_e)
    out = hi_e ^ lo_e ^ t  # OR via a ^ b ^ ab
    return map_subs(out, lambda s: s.reshape(batch + (na * nb,)))


def convert(ctx, x: RssShare, k2: int) -> RssShare:
    """Sign-extend a k-bit shared value into Z_{2^k2}, k2 > k."""
    k = x.k
    if k2 <= k:
        raise ValueError(f"convert requires a wider target ring ({k2} <= {k})")
    with ctx.scoped("convert"):
        half = 1 << (k - 1)
        xs = ctx.add_public(x, half)  # shift to an unsigned value
        ra, rb = _edabit_shaped(ctx, k, k2, x.shape)
        c = open_shares(ctx, xs + mod_switch_local(ra, k), k)
        _, borrows = sub_public_bits(ctx, c, rb)
        wa = b2a(ctx, map_subs(borrows, lambda s: s[..., k]), k2)
        y = ctx.add_public((wa << k) - ra, c)
        return ctx.add_public(y, (1 << k2) - half)
