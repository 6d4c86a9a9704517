"""Exact float summation on shares via superaccumulators.

The pipeline mirrors the plaintext reference in `oracle` stage for stage:
spread each shared float onto the block grid (fl2sa), sum grids blockwise
with carry regularization (sasum), then extract the top nonzero window
back into a float (sa2fl / normalize). All value-dependent control flow is
replaced by oblivious selection (one-hot markers, dot products), so the
communication pattern depends only on the parameter set and input count.

Shapes: every operation accepts leading batch axes; the documented shapes
below are per instance. Blocks are held in Z_{2^k} with k = 2w, giving a
full block of headroom for products and column sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import _edabit_shaped, all_or, bitdec, eqz, msb, prefix_and, prefix_or, trunc
from .params import FpParams
from .primitives import (
    b2a,
    bit_add,
    bit_and,
    csa,
    dot_product,
    map_subs,
    mult,
    open_bits,
    open_shares,
)
from .ring import BitShare, RssShare, mask_of, share_bits_plaintext, share_plaintext

__all__ = [
    "FloatShared",
    "SuperaccShared",
    "share_floats",
    "share_superacc",
    "open_float",
    "open_superacc",
    "to_signed",
    "shift",
    "b2u",
    "fl2sa",
    "sasum",
    "normalize",
    "sa2fl",
    "flsum",
]


@dataclass(frozen=True)
class FloatShared:
    """A shared float in the summation frame.

    b: sign bits; v_blocks: significand in beta-1 blocks of w bits, LSB
    block first (last axis); p: biased exponent on the frame grid. Blocks
    and exponent live in Z_{2^k}.
    """

    b: BitShare
    v_blocks: RssShare
    p: RssShare


@dataclass(frozen=True)
class SuperaccShared:
    """alpha shared blocks at width k = 2w, least significant first (last
    axis). Regularized when every block is in (-2^w, 2^w) as a signed k-bit
    value."""

    y: RssShare


# ---------------------------------------------------------------------------
# Dealer-side plumbing (tests, benchmarks, ingestion).


def to_signed(arr: np.ndarray, k: int) -> np.ndarray:
    """Reinterpret k-bit ring elements as signed integers."""
    if k == 64:
        return np.ascontiguousarray(arr, dtype=np.uint64).view(np.int64)
    h = np.int64(1) << np.int64(k - 1)
    return (arr.astype(np.int64) ^ h) - h


def share_floats(frames, prm: FpParams, rng) -> dict:
    """Share a sequence of frame triples (b, v, p); returns {pid: FloatShared}."""
    b = np.array([f[0] for f in frames], dtype=np.uint8)
    v = np.array([f[1] for f in frames], dtype=np.uint64)
    p = np.array([f[2] for f in frames], dtype=np.uint64)
    shifts = np.uint64(prm.w) * np.arange(prm.beta - 1, dtype=np.uint64)
    vb = (v[:, None] >> shifts) & np.uint64((1 << prm.w) - 1)
    sb = share_bits_plaintext(b, rng)
    sv = share_plaintext(vb, prm.k, rng)
    sp = share_plaintext(p, prm.k, rng)
    return {pid: FloatShared(sb[pid], sv[pid], sp[pid]) for pid in (1, 2, 3)}


def share_superacc(blocks, prm: FpParams, rng) -> dict:
    """Share signed superaccumulator blocks; returns {pid: SuperaccShared}."""
    arr = np.array(blocks, dtype=np.int64).astype(np.uint64) & mask_of(prm.k)
    sh = share_plaintext(arr, prm.k, rng)
    return {pid: SuperaccShared(sh[pid]) for pid in (1, 2, 3)}


def open_float(ctx, x: FloatShared, prm: FpParams):
    """Open a shared float; returns (b, v, p) arrays in the frame encoding."""
    b = open_bits(ctx, x.b)
    vb = open_shares(ctx, x.v_blocks)
    p = open_shares(ctx, x.p)
    shifts = np.uint64(prm.w) * np.arange(prm.beta - 1, dtype=np.uint64)
    v = (vb << shifts).sum(axis=-1, dtype=np.uint64)
    return b, v, p


def open_superacc(ctx, acc: SuperaccShared, prm: FpParams) -> np.ndarray:
    """Open a shared superaccumulator as signed block values."""
    return to_signed(open_shares(ctx, acc.y), prm.k)


# ---------------------------------------------------------------------------
# Small share helpers.


def _zero_arith(k, shape) -> RssShare:
    z = np.zeros(shape, dtype=np.uint64)
    return RssShare(k, z, z)


def _zero_bits(shape) -> BitShare:
    z = np.zeros(shape, dtype=np.uint8)
    return BitShare(z, z)


def _stack_arith(shares, axis=0) -> RssShare:
    k = shares[0].k
    return RssShare(k, np.stack([s.sub_a for s in shares], axis=axis),
                    np.stack([s.sub_b for s in shares], axis=axis))


def _stack_bits(shares, axis=0) -> BitShare:
    return BitShare(np.stack([s.sub_a for s in shares], axis=axis),
                    np.stack([s.sub_b for s in shares], axis=axis))


def _wsum(x: RssShare, weights: np.ndarray, k: int) -> RssShare:
    """Public-weighted sum over the last axis (local)."""
    m = mask_of(k)
    w = weights.astype(np.uint64)
    return RssShare(k, (x.sub_a * w).sum(axis=-1, dtype=np.uint64) & m,
                    (x.sub_b * w).sum(axis=-1, dtype=np.uint64) & m)


def _lane_sum(x: RssShare) -> RssShare:
    m = mask_of(x.k)
    return RssShare(x.k, x.sub_a.sum(axis=-1, dtype=np.uint64) & m,
                    x.sub_b.sum(axis=-1, dtype=np.uint64) & m)


def _sign_factor(ctx, bit_arith: RssShare) -> RssShare:
    """1 - 2*b as a ring element: +1 for b=0, -1 for b=1."""
    return ctx.add_public(bit_arith * (mask_of(bit_arith.k) - np.uint64(1)), 1)


def _mult_tree(ctx, shares) -> RssShare:
    """Product of a list of shares, pairing per level (stacked lanes)."""
    while len(shares) > 1:
        t = len(shares) // 2
        a = _stack_arith([shares[2 * i] for i in range(t)])
        b = _stack_arith([shares[2 * i + 1] for i in range(t)])
        prod = mult(ctx, a, b)
        shares = [map_subs(prod, lambda v, i=i: v[i]) for i in range(t)] + shares[2 * t:]
    return shares[0]


# ---------------------------------------------------------------------------
# Shift: multiply beta-1 w-bit blocks by 2^p for private p in [0, w).


def shift(ctx, v_blocks: RssShare, p: RssShare, prm: FpParams) -> RssShare:
    """Block-aligned left shift by a private amount.

    Each input block is multiplied by a shared 2^p (square-and-multiply on
    the bits of p) and split into low/high halves; the halves recombine
    with the neighboring block, so the output is the same value in beta
    blocks, each still below 2^w.
    """
    k, w, gamma = prm.k, prm.w, prm.gamma
    with ctx.scoped("shift"):
        pb = bitdec(ctx, p, gamma)
        pa = b2a(ctx, pb, k)
        factors = [
            ctx.add_public(
                map_subs(pa, lambda v, j=j: v[..., j]) * np.uint64((1 << (1 << j)) - 1), 1)
            for j in range(gamma)
        ]
        s = _mult_tree(ctx, factors)
        u = mult(ctx, v_blocks, map_subs(s, lambda v: v[..., None]))
        d = trunc(ctx, u, k, w)  # the part crossing into the next block
        lo = u - (d << w)
        dprev = map_subs(d, lambda v: np.concatenate(
            [np.zeros_like(v[..., :1]), v[..., :-1]], axis=-1))
        top = map_subs(d, lambda v: v[..., -1:])
        return RssShare.concat([lo + dprev, top], axis=-1)


# ---------------------------------------------------------------------------
# B2U: unit vector at a private index.


def b2u(ctx, a: RssShare, ell: int) -> RssShare:
    """Unit-vector expansion of a in [1, ell]: output bit a-1 is 1.

    Opens (a-1) masked by a random q-bit value whose one-hot disjunction
    table is precomputed from shared bits; rotating the table by the public
    masked value lands the zero cell at position a-1. Out-of-range a gives
    an unspecified (still well-formed) output.
    """
    k = a.k
    q = max(1, (ell - 1).bit_length())
    with ctx.scoped("b2u"):
        ra, rb = _edabit_shaped(ctx, q, k, a.shape)
        table = all_or(ctx, map_subs(rb, lambda v: v[..., ::-1]))
        c = open_shares(ctx, ctx.add_public(a, mask_of(k)) + ra, q)
        idx = (c[..., None].astype(np.int64) - np.arange(ell, dtype=np.int64)) % (1 << q)
        gathered = map_subs(table, lambda v: np.take_along_axis(v, idx, axis=-1))
        return b2a(ctx, ctx.flip(gathered), k)


# ---------------------------------------------------------------------------
# FL2SA: spread one float across the accumulator grid.


def fl2sa(ctx, x: FloatShared, prm: FpParams) -> SuperaccShared:
    """Superaccumulator holding exactly the value of the shared float.

    The exponent splits into a block index (written obliviously through a
    unit vector) and an in-block shift; the significand, with its implicit
    leading bit added for nonzero exponents, is shifted and signed, then
    scattered by one batched dot product.
    """
    k, w, gamma, alpha, beta, m = prm.k, prm.w, prm.gamma, prm.alpha, prm.beta, prm.m
    batch = x.p.shape
    with ctx.scoped("fl2sa"):
        tmark = ctx.add_public(-b2a(ctx, eqz(ctx, x.p, prm.e_bits), k), 1)
        j = m // w
        lifted = map_subs(x.v_blocks, lambda v: v[..., j]) + tmark * np.uint64(1 << (m % w))
        mant = RssShare.concat([
            map_subs(x.v_blocks, lambda v: v[..., :j]),
            map_subs(lifted, lambda v: v[..., None]),
            map_subs(x.v_blocks, lambda v: v[..., j + 1:]),
        ], axis=-1)
        p_high = trunc(ctx, x.p, prm.e_bits, gamma)
        p_low = x.p - (p_high << gamma)
        window = shift(ctx, mant, p_low, prm)
        sig = _sign_factor(ctx, b2a(ctx, x.b, k))
        signed = mult(ctx, window, map_subs(sig, lambda v: v[..., None]))
        unit = b2u(ctx, ctx.add_public(p_high, 1), alpha)
        padded = RssShare.concat([_zero_arith(k, batch + (beta - 1,)), unit], axis=-1)
        scatter = (np.arange(alpha)[:, None] - np.arange(beta)[None, :]) + (beta - 1)
        sel = map_subs(padded, lambda v: v[..., scatter])
        rows = map_subs(signed, lambda v: np.broadcast_to(
            v[..., None, :], batch + (alpha, beta)))
        return SuperaccShared(dot_product(ctx, sel, rows))


# ---------------------------------------------------------------------------
# SASum: blockwise sum with carry regularization.


def sasum(ctx, accs: SuperaccShared, prm: FpParams) -> SuperaccShared:
    """Sum superaccumulators over the second-to-last axis; regularized result.

    Column sums are re-signed, split at 2^w with the remainder balanced
    around zero (carry = floor((|s| + 2^(w-1)) / 2^w)), and each signed
    carry is added one block up. The carry off the top block is dropped; it
    is zero unless the total overflows the grid.
    """
    n = accs.y.shape[-2]
    if not 1 <= n <= 1 << (prm.w - 2):
        raise ValueError(f"can sum 1..2^{prm.w - 2} superaccumulators, got {n}")
    k, w = prm.k, prm.w
    with ctx.scoped("sasum"):
        m = mask_of(k)
        s = map_subs(accs.y, lambda v: v.sum(axis=-2, dtype=np.uint64) & m)
        sig = _sign_factor(ctx, b2a(ctx, msb(ctx, s), k))
        aabs = mult(ctx, sig, s)
        carry = trunc(ctx, ctx.add_public(aabs, 1 << (w - 1)), k, w)
        t = mult(ctx, sig, carry)
        tprev = map_subs(t, lambda v: np.concatenate(
            [np.zeros_like(v[..., :1]), v[..., :-1]], axis=-1))
        return SuperaccShared(s - (t << w) + tprev)


# ---------------------------------------------------------------------------
# Normalize: beta signed blocks -> (sign, significand, window exponent).


def _window_operands(ctx, wbits: BitShare, prm: FpParams):
    """Sign-extended L-bit addends, one per window block, offset one bit up
    (the doubling that makes room for the sticky position at bit 0)."""
    L = prm.l + 2
    batch = wbits.shape[:-2]
    ops = []
    for i in range(prm.beta):
        lead = prm.w * i + 1
        nbits = min(prm.k, L - lead)
        parts = [_zero_bits(batch + (lead,)),
                 map_subs(wbits, lambda v, i=i, nb=nbits: v[..., i, :nb])]
        rep = L - lead - nbits
        if rep > 0:
            parts.append(map_subs(wbits, lambda v, i=i, r=rep: np.broadcast_to(
                v[..., i, prm.k - 1:prm.k], batch + (r,))))
        ops.append(BitShare.concat(parts, axis=-1))
    return ops


def _csa_reduce(ctx, ops) -> BitShare:
    """Carry-save tree to two addends, then one carry-lookahead addition."""
    while len(ops) > 2:
        t = len(ops) // 3
        a = _stack_bits([ops[3 * i] for i in range(t)])
        b = _stack_bits([ops[3 * i + 1] for i in range(t)])
        c = _stack_bits([ops[3 * i + 2] for i in range(t)])
        x, mj = csa(ctx, a, b, c)
        mj2 = map_subs(mj, lambda v: np.concatenate(
            [np.zeros_like(v[..., :1]), v[..., :-1]], axis=-1))
        rest = ops[3 * t:]
        ops = rest + [map_subs(x, lambda v, i=i: v[i]) for i in range(t)]
        ops += [map_subs(mj2, lambda v, i=i: v[i]) for i in range(t)]
    return bit_add(ctx, ops[0], ops[1])


def normalize(ctx, window: RssShare, sticky, prm: FpParams):
    """Truncate a signed block window to (sign, significand blocks, p').

    `sticky` is a (nonzero, negative) BitShare pair describing whatever
    value sits below the window (None means nothing does); it joins the
    block sum one position under the window so an opposite-signed tail
    borrows out of the kept bits exactly as in full-width arithmetic.

    The blocks are bit-decomposed, sign-extended, and added; the absolute
    value's leading-one position over bits l..m+1 becomes a one-hot marker
    row (saturating at m for small values) that selects the m significand
    bits and the exponent by dot product. p' counts bit positions above
    m+1, so p' = 0 covers both the saturated and the at-m+1 cases.
    """
    w, m, l, beta, k = prm.w, prm.m, prm.l, prm.beta, prm.k
    L = l + 2
    batch = window.shape[:-1]
    with ctx.scoped("normalize"):
        wbits = bitdec(ctx, window, k)
        if sticky is None:
            b0, neg = _zero_bits(batch), _zero_bits(batch)
        else:
            b0, neg = sticky
        ops = _window_operands(ctx, wbits, prm)
        ops.append(BitShare.concat([
            map_subs(b0, lambda v: v[..., None]),
            map_subs(neg, lambda v: np.broadcast_to(v[..., None], batch + (L - 1,))),
        ], axis=-1))
        total = _csa_reduce(ctx, ops)  # two's complement of 2*window + sticky

        sbit = map_subs(total, lambda v: v[..., L - 1])
        s1 = map_subs(total, lambda v: v[..., L - 1:])
        x = total ^ s1  # flip all bits when negative ...
        pa = prefix_and(ctx, x)
        carries = bit_and(ctx, map_subs(s1, lambda v: np.broadcast_to(v, batch + (L - 1,))),
                          map_subs(pa, lambda v: v[..., :L - 1]))
        a = x ^ BitShare.concat([s1, carries], axis=-1)  # ... then add the sign back

        dsc = prefix_or(ctx, map_subs(a, lambda v: v[..., m + 1:l + 1][..., ::-1]))
        ebits = map_subs(dsc, lambda v: v[..., ::-1])  # ebits[j] = OR of |a| bits >= m+1+j
        crest = map_subs(a, lambda v: v[..., 1:l + 1])
        conv = b2a(ctx, BitShare.concat([ebits, crest], axis=-1), k)
        ea = map_subs(conv, lambda v: v[..., :l - m])
        ca = map_subs(conv, lambda v: v[..., l - m:])

        # Marker row zz: zz_0 saturates (leading one at m+1 or below), the
        # rest are first differences of the prefix-OR chain.
        eshift = map_subs(ea, lambda v: np.concatenate(
            [v[..., 1:], np.zeros_like(v[..., :1])], axis=-1))
        diffs = ea - eshift
        zz0 = ctx.add_public(-map_subs(ea, lambda v: v[..., 1:2]), 1)
        zz = RssShare.concat([zz0, map_subs(diffs, lambda v: v[..., 1:])], axis=-1)

        # Significand bit i = sum_j zz_j * c_{i+1+j}: a batched sliding dot.
        idx = np.arange(m)[:, None] + np.arange(l - m)[None, :]
        rows = map_subs(zz, lambda v: np.broadcast_to(v[..., None, :], batch + (m, l - m)))
        cols = map_subs(ca, lambda v: v[..., idx])
        u = dot_product(ctx, rows, cols)
        bit_m = map_subs(diffs, lambda v: v[..., 0])  # leading one exactly at m+1

        blocks = []
        for t in range(beta - 1):
            lo_i, hi_i = w * t, min(w * (t + 1), m)
            seg = map_subs(u, lambda v, lo=lo_i, hi=hi_i: v[..., lo:hi])
            blk = _wsum(seg, np.uint64(1) << np.arange(hi_i - lo_i, dtype=np.uint64), k)
            if lo_i <= m < w * (t + 1):
                blk = blk + bit_m * np.uint64(1 << (m % w))
            blocks.append(blk)
        vb = _stack_arith(blocks, axis=-1)
        p_win = _lane_sum(map_subs(ea, lambda v: v[..., 1:]))
        return sbit, vb, p_win


# ---------------------------------------------------------------------------
# SA2FL: extract the top nonzero window of a superaccumulator as a float.


def sa2fl(ctx, acc: SuperaccShared, prm: FpParams) -> FloatShared:
    """Oblivious window extraction plus normalization.

    A zero-test per block and a top-down AND chain mark the first nonzero
    block; difference markers select beta consecutive blocks by dot
    product (the bottom window stands in when everything is zero). The
    topmost nonzero block below the window, if any, supplies the sticky
    sign. The exponent is the window offset plus normalize's output.
    """
    alpha, beta, w, k = prm.alpha, prm.beta, prm.w, prm.k
    y = acc.y
    batch = y.shape[:-1]
    low = alpha - beta
    with ctx.scoped("sa2fl"):
        cz = eqz(ctx, y, k)
        rev = prefix_and(ctx, map_subs(cz, lambda v: v[..., beta:][..., ::-1]))
        dchain = map_subs(rev, lambda v: v[..., ::-1])  # dchain[j] = all-zero above block beta+j
        dd = b2a(ctx, dchain, k)

        first = map_subs(dd, lambda v: v[..., 0:1])
        mids = map_subs(dd, lambda v: v[..., 1:]) - map_subs(dd, lambda v: v[..., :-1])
        last = ctx.add_public(-map_subs(dd, lambda v: v[..., -1:]), 1)
        marks = RssShare.concat([first, mids, last], axis=-1)  # window bottom = beta+j

        idx = np.arange(beta)[:, None] + np.arange(low + 1)[None, :]
        rows = map_subs(marks, lambda v: np.broadcast_to(
            v[..., None, :], batch + (beta, low + 1)))
        cols = map_subs(y, lambda v: v[..., idx])
        window = dot_product(ctx, rows, cols)

        nz = ctx.flip(map_subs(cz, lambda v: v[..., :low]))
        below = ctx.flip(dchain)  # block beta+j is below the window iff chain broke
        e = bit_and(ctx, nz, below)
        suff = map_subs(prefix_and(ctx, map_subs(ctx.flip(e), lambda v: v[..., ::-1])),
                        lambda v: v[..., ::-1])
        excl = BitShare.concat([map_subs(suff, lambda v: v[..., 1:]),
                                ctx.public_bits(1, batch + (1,))], axis=-1)
        top_nz = bit_and(ctx, e, excl)  # one-hot: highest nonzero block under the window
        sgn = msb(ctx, map_subs(y, lambda v: v[..., :low]))
        neg_top = bit_and(ctx, top_nz, sgn)
        b0 = map_subs(top_nz, lambda v: np.bitwise_xor.reduce(v, axis=-1))
        neg = map_subs(neg_top, lambda v: np.bitwise_xor.reduce(v, axis=-1))

        sign, vb, p_win = normalize(ctx, window, (b0, neg), prm)
        p = ctx.add_public(p_win - _lane_sum(dd) * np.uint64(w), w * low)
        return FloatShared(b=sign, v_blocks=vb, p=p)


# ---------------------------------------------------------------------------
# FLSum: the full pipeline.


def sasum_tree(ctx, accs: SuperaccShared, prm: FpParams,
               group_cap: int | None = None) -> SuperaccShared:
    """Reduce a lane axis of superaccumulators to a single one.

    Beyond 2^(w-2) superaccumulators the blockwise sums could overflow
    their headroom, so larger inputs are summed in layers of at most that
    many (leftmost-fill groups, zero-padded to equal size so each layer
    is one batched sasum).
    """
    cap = (1 << (prm.w - 2)) if group_cap is None else group_cap
    if cap < 2:
        raise ValueError("group size must be at least 2")
    alpha = prm.alpha
    cur = accs.y  # (n, alpha)
    if cur.shape[0] == 0:
        raise ValueError("need at least one superaccumulator")
    if cur.shape[0] == 1:
        return sasum(ctx, accs, prm)
    while cur.shape[0] > 1:
        n = cur.shape[0]
        groups = -(-n // cap)
        size = min(cap, n)
        pad = groups * size - n
        if pad:
            cur = map_subs(cur, lambda v: np.concatenate(
                [v, np.zeros((pad, alpha), dtype=np.uint64)], axis=0))
        layer = map_subs(cur, lambda v: v.reshape(groups, size, alpha))
        cur = sasum(ctx, SuperaccShared(layer), prm).y
    return SuperaccShared(map_subs(cur, lambda v: v[0]))


def flsum(ctx, xs: FloatShared, prm: FpParams, group_cap: int | None = None) -> FloatShared:
    """Sum n shared floats exactly; returns one shared float.

    Inputs ride a single leading lane axis.
    """
    if xs.p.shape == () or xs.p.shape[0] == 0:
        raise ValueError("need a nonempty lane axis of floats")
    cap = (1 << (prm.w - 2)) if group_cap is None else group_cap
    if cap < 2:
        raise ValueError("group size must be at least 2")
    with ctx.scoped("flsum"):
        grid = fl2sa(ctx, xs, prm)
        acc = sasum_tree(ctx, grid, prm, group_cap)
        return sa2fl(ctx, acc, prm)
