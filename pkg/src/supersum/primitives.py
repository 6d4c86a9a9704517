"""Core three-party primitives on replicated shares.

Communication per invocation (n parallel lanes, ring width k):

  mult / bit_and   3kn bits, 1 round   (bit_and is the k=1 case)
  dot_product      3k per output row, 1 round, independent of row length
  open(ell)        3*ell*n bits, 1 round
  b2a              3kn bits, 2 rounds
  edabit           built from bit_and + one b2a; randomness itself is free

Each party's zero-share masks come from the two PRG keys it holds, so both
holders of a key must draw identical amounts in identical order; the
runtime asserts this at teardown.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ring import NEXT, PREV, BitShare, RssShare, mask_of

__all__ = [
    "mult",
    "bit_and",
    "dot_product",
    "open_shares",
    "open_bits",
    "b2a",
    "rand_bit",
    "edabit",
    "EdaBitOutput",
    "csa",
    "bit_add",
    "ks_scan",
    "map_subs",
]


def map_subs(share, f):
    """Apply the same public lane reshuffle to both sub-share arrays."""
    return share._like(f(share.sub_a), f(share.sub_b))


def _zero_bits(shape):
    z = np.zeros(shape, dtype=np.uint8)
    return BitShare(z, z)


# ---------------------------------------------------------------------------
# Multiplication and friends.
#
# Each party computes a three-term slice of the nine cross products, using
# the cyclic order a = next(i), b = prev(i):
#     z_i = x_a*y_a + x_a*y_b + x_b*y_a
# masks it with a replicated zero share, and passes it to prev(i), where it
# becomes sub-share next(i) of the product.


def _reshare(ctx, z_flat, width, domain, scope_done=True):
    """Mask a local cross-term slice and exchange it (common mult tail)."""
    nx, pv = NEXT[ctx.pid], PREV[ctx.pid]
    n = z_flat.size
    if domain == "bit":
        alpha = ctx.prg[nx].bits(n) ^ ctx.prg[pv].bits(n)
        mine = z_flat ^ alpha
        ctx.send(pv, mine, 1)
        theirs = ctx.receive(nx, 1, n, domain="bit")
    else:
        m = mask_of(width)
        alpha = (ctx.prg[nx].elements(width, n) - ctx.prg[pv].elements(width, n)) & m
        mine = (z_flat + alpha) & m
        ctx.send(pv, mine, width)
        theirs = ctx.receive(nx, width, n)
    return mine, theirs


def mult(ctx, x: RssShare, y: RssShare) -> RssShare:
    """Pointwise product of two shared vectors (shapes broadcast)."""
    assert x.k == y.k, "ring width mismatch"
    k = x.k
    m = mask_of(k)
    with ctx.scoped("mult"):
        nx, pv = NEXT[ctx.pid], PREV[ctx.pid]
        xa, xb = ctx.sub(x, nx), ctx.sub(x, pv)
        ya, yb = ctx.sub(y, nx), ctx.sub(y, pv)
        z = (xa * ya + xa * yb + xb * ya) & m
        shape = z.shape
        mine, theirs = _reshare(ctx, z.ravel(), k, "arith")
        return ctx.from_subs({nx: mine.reshape(shape), pv: theirs.reshape(shape)}, k)


def bit_and(ctx, x: BitShare, y: BitShare) -> BitShare:
    """Pointwise AND of two shared bit vectors (shapes broadcast)."""
    with ctx.scoped("mult"):
        nx, pv = NEXT[ctx.pid], PREV[ctx.pid]
        xa, xb = ctx.sub(x, nx), ctx.sub(x, pv)
        ya, yb = ctx.sub(y, nx), ctx.sub(y, pv)
        z = (xa & ya) ^ (xa & yb) ^ (xb & ya)
        shape = z.shape
        mine, theirs = _reshare(ctx, z.ravel(), 1, "bit")
        return ctx.from_subs({nx: mine.reshape(shape), pv: theirs.reshape(shape)})


def dot_product(ctx, x: RssShare, y: RssShare) -> RssShare:
    """Inner product over the last axis; traffic is 3k bits per output row
    regardless of the row length."""
    assert x.k == y.k, "ring width mismatch"
    k = x.k
    m = mask_of(k)
    with ctx.scoped("dot"):
        nx, pv = NEXT[ctx.pid], PREV[ctx.pid]
        xa, xb = ctx.sub(x, nx), ctx.sub(x, pv)
        ya, yb = ctx.sub(y, nx), ctx.sub(y, pv)
        z = (xa * ya + xa * yb + xb * ya).sum(axis=-1, dtype=np.uint64) & m
        shape = z.shape
        mine, theirs = _reshare(ctx, z.ravel(), k, "arith")
        return ctx.from_subs({nx: mine.reshape(shape), pv: theirs.reshape(shape)}, k)


# ---------------------------------------------------------------------------
# Opening.  Party i is sent sub-share i by the lower-numbered of its two
# holders, reduced to the opening width first.


def open_shares(ctx, x: RssShare, ell: int = None) -> np.ndarray:
    """Open x mod 2^ell to all parties (ell defaults to the ring width)."""
    ell = x.k if ell is None else ell
    m = mask_of(ell)
    with ctx.scoped("open"):
        a = (x.sub_a & m).ravel()
        b = (x.sub_b & m).ravel()
        n = a.size
        if ctx.pid == 1:
            ctx.send(2, a, ell)  # sub-share 2
            ctx.send(3, b, ell)  # sub-share 3
            missing = ctx.receive(2, ell, n)
        elif ctx.pid == 2:
            ctx.send(1, a, ell)  # sub-share 1
            missing = ctx.receive(1, ell, n)
        else:
            missing = ctx.receive(1, ell, n)
        return ((a + b + missing) & m).reshape(x.shape)


def open_bits(ctx, x: BitShare) -> np.ndarray:
    with ctx.scoped("open"):
        a, b = x.sub_a.ravel(), x.sub_b.ravel()
        n = a.size
        if ctx.pid == 1:
            ctx.send(2, a, 1)
            ctx.send(3, b, 1)
            missing = ctx.receive(2, 1, n, domain="bit")
        elif ctx.pid == 2:
            ctx.send(1, a, 1)
            missing = ctx.receive(1, 1, n, domain="bit")
        else:
            missing = ctx.receive(1, 1, n, domain="bit")
        return (a ^ b ^ missing).reshape(x.shape)


# ---------------------------------------------------------------------------
# Bit-to-arithmetic conversion: two fused XOR gadgets.
#
# s = x1 XOR x2 via one masked product from party 3, then u = s*x3 via a
# two-message exchange between parties 1 and 2.  Party 1's message does not
# depend on anything it receives, so the whole conversion is 2 rounds.


def b2a(ctx, x: BitShare, k: int) -> RssShare:
    m = mask_of(k)
    shape = x.shape
    a = x.sub_a.ravel().astype(np.uint64)
    b = x.sub_b.ravel().astype(np.uint64)
    n = a.size
    two = np.uint64(2)
    with ctx.scoped("b2a"):
        if ctx.pid == 3:
            x1, x2 = a, b
            s2 = ctx.prg[2].elements(k, n)
            s1 = (x1 * x2 - s2) & m
            ctx.send(2, s1, k)
            s1n = (x1 - two * s1) & m
            s2n = (x2 - two * s2) & m
            u1 = ctx.prg[1].elements(k, n)
            u2 = ctx.receive(1, k, n)
            out = {1: (s1n - two * u1) & m, 2: (s2n - two * u2) & m}
        elif ctx.pid == 1:
            x2, x3 = a, b
            s2 = ctx.prg[2].elements(k, n)
            s2n = (x2 - two * s2) & m
            udd = ctx.prg[3].elements(k, n)
            u2 = (s2n * x3 - udd) & m
            ctx.send(3, u2, k)  # independent of the message below
            uprime = ctx.receive(2, k, n)
            u3 = (uprime + udd) & m
            out = {2: (s2n - two * u2) & m, 3: (x3 - two * u3) & m}
        else:  # pid == 2
            x1, x3 = a, b
            s1 = ctx.receive(3, k, n)
            s1n = (x1 - two * s1) & m
            u1 = ctx.prg[1].elements(k, n)
            uprime = (s1n * x3 - u1) & m
            ctx.send(1, uprime, k)
            u3 = (uprime + ctx.prg[3].elements(k, n)) & m
            out = {1: (s1n - two * u1) & m, 3: (x3 - two * u3) & m}
        res = ctx.from_subs(out, k)
        return res.reshape(shape) if shape != res.shape else res


def rand_bit(ctx, k: int, count: int) -> RssShare:
    """Arithmetic sharing of uniform bits nobody knows (free randomness + b2a)."""
    with ctx.scoped("rand_bit"):
        lo, hi = ctx.held
        bits = BitShare(ctx.prg[lo].bits(count), ctx.prg[hi].bits(count))
        return b2a(ctx, bits, k)


# ---------------------------------------------------------------------------
# Shared-bit adder circuits (carry-save + Kogge-Stone carry lookahead).


def csa(ctx, a: BitShare, b: BitShare, c: BitShare):
    """3:2 compression: returns (xor, majority); sum = xor + 2*majority."""
    ac = a ^ c
    bc = b ^ c
    maj = bit_and(ctx, ac, bc) ^ c
    return a ^ b ^ c, maj


def ks_scan(ctx, g: BitShare, p: BitShare):
    """Inclusive Kogge-Stone scan of (G,P) -> (G | P&G', P&P') over the last
    axis; G[i] ends up covering positions 0..i.  Requires g & p == 0
    pointwise (true for both carries and borrows), which makes OR = XOR."""
    L = g.shape[-1]
    gp, pp = g, p
    d = 1
    while d < L:
        hi_p = map_subs(pp, lambda s: s[..., d:])
        lo_g = map_subs(gp, lambda s: s[..., :L - d])
        lo_p = map_subs(pp, lambda s: s[..., :L - d])
        t = bit_and(ctx, BitShare.concat([hi_p, hi_p], axis=-1),
                    BitShare.concat([lo_g, lo_p], axis=-1))
        t1 = map_subs(t, lambda s: s[..., :L - d])
        t2 = map_subs(t, lambda s: s[..., L - d:])
        keep_g = map_subs(gp, lambda s: s[..., :d])
        keep_p = map_subs(pp, lambda s: s[..., :d])
        upd_g = map_subs(gp, lambda s: s[..., d:]) ^ t1
        gp = BitShare.concat([keep_g, upd_g], axis=-1)
        pp = BitShare.concat([keep_p, t2], axis=-1)
        d *= 2
    return gp, pp


def bit_add(ctx, a: BitShare, b: BitShare) -> BitShare:
    """Binary addition over the last axis (LSB first), mod 2^L."""
    L = a.shape[-1]
    p = a ^ b
    if L == 1:
        return p
    g = bit_and(ctx, a, b)
    gp, _ = ks_scan(ctx, g, p)
    # carry into position i is the inclusive prefix ending at i-1
    carry_in = map_subs(gp, lambda s: np.concatenate(
        [np.zeros_like(s[..., :1]), s[..., :-1]], axis=-1))
    return p ^ carry_in


# ---------------------------------------------------------------------------
# edabit: coupled random sharings, arithmetic and bitwise, of the same value.


@dataclass(frozen=True)
class EdaBitOutput:
    arithmetic: RssShare  # (count,) at ring width k
    bits: BitShare  # (count, nbits), LSB first


def edabit(ctx, nbits: int, k: int, count: int = 1) -> EdaBitOutput:
    """Random r < 2^nbits shared both ways for free, glued by one adder.

    Each PRG key j yields a value r_j known to both its holders, giving
    zero-cost replicated sharings of r_j in both domains; the bitwise
    sharings are summed with a CSA + carry-lookahead adder and the two
    overflow bits are converted and subtracted from the arithmetic side,
    so both outputs equal r = (r_1+r_2+r_3) mod 2^nbits exactly.
    """
    assert 1 <= nbits <= k <= 64
    with ctx.scoped("edabit"):
        lo, hi = ctx.held
        draws = {j: ctx.prg[j].bits(nbits * count).reshape(count, nbits)
                 for j in (lo, hi)}
        zeros_b = np.zeros((count, nbits), dtype=np.uint8)
        parts = []
        for j in (1, 2, 3):
            parts.append(BitShare(draws[j] if j == lo else zeros_b,
                                  draws[j] if j == hi else zeros_b))
        weights = np.uint64(1) << np.arange(nbits, dtype=np.uint64)
        vals = {j: (draws[j].astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)
                   & mask_of(k)
                for j in (lo, hi)}
        arith = RssShare(k, vals[lo], vals[hi])

        s, carry = csa(ctx, *parts)
        pad2 = _zero_bits((count, 2))
        pad1 = _zero_bits((count, 1))
        a = BitShare.concat([s, pad2], axis=-1)
        b = BitShare.concat([pad1, carry, pad1], axis=-1)
        total = bit_add(ctx, a, b)  # exact sum over nbits + 2 positions

        out_bits = map_subs(total, lambda t: t[..., :nbits])
        top = map_subs(total, lambda t: t[..., nbits:])
        conv = b2a(ctx, top, k)  # (count, 2)
        m = mask_of(k)
        if nbits < k:
            arith = arith - map_subs(conv, lambda c: (c[..., 0] << np.uint64(nbits)) & m)
        if nbits + 1 < k:
            arith = arith - map_subs(conv, lambda c: (c[..., 1] << np.uint64(nbits + 1)) & m)
        return EdaBitOutput(arith, out_bits)
