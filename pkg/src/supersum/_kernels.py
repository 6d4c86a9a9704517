"""Batch kernels for the plaintext hot paths.

Two interchangeable backends compute the same functions: tight numba
njit loops, and vectorized numpy. The numba route is used when numba
imports and SUPERSUM_PURE_NUMPY is not set to 1; either way the public
names (`codec_roundtrip32`, `codec_roundtrip64`, `fl2sa_blocks`,
`column_regularize`, `acc_values_i64`) compute bit-identical results —
a test pins the two backends to each other and to the scalar oracle.

These exist for the bulk checks (exhaustive 32-bit codec sweep, million-
row regularization stress, large summation corpora); protocol code never
calls them.
"""

from __future__ import annotations

import math
import os

import numpy as np

PURE_ENV = "SUPERSUM_PURE_NUMPY"

if os.environ.get(PURE_ENV) == "1":
    HAS_NUMBA = False
else:
    try:
        # workqueue is always compiled in; the default TBB probe warns on
        # older TBB builds
        os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
        from numba import njit, prange

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - exercised via the env flag
        HAS_NUMBA = False


# --- numpy backend -----------------------------------------------------
#
# Codec check per pattern: decode IEEE fields, map to the summation frame,
# reconstruct the value as mantissa * 2^shift (exact: the mantissa is an
# integer below 2^55 with its low bits clear, ldexp only moves the
# exponent), compare with the native float, then map the frame back to
# IEEE bits and require bit equality. The frame->value shift is uniformly
# p + G: normals carry mantissa 2^m + v at scale p + G, the p = 0 frame
# carries v << 3 at scale G.


def _roundtrip32_np(bits: np.ndarray) -> int:
    """Count binary32 patterns failing the codec round-trip/value check.

    Inf/NaN patterns are skipped (not counted as failures).
    """
    bits = np.ascontiguousarray(bits, dtype=np.uint32)
    e, m = 8, 23
    b = (bits >> np.uint32(e + m)).astype(np.int64)
    p_ieee = ((bits >> np.uint32(m)) & np.uint32((1 << e) - 1)).astype(np.int64)
    v = (bits & np.uint32((1 << m) - 1)).astype(np.int64)
    finite = p_ieee != (1 << e) - 1

    p = np.where(p_ieee == 0, 0, p_ieee + 2)
    fv = np.where(p_ieee == 0, v << 3, v)

    mant = np.where(p > 0, fv + (1 << m), fv).astype(np.float64)
    with np.errstate(invalid="ignore", over="ignore"):
        val = np.ldexp(mant, (p - 152).astype(np.int32))
        native = bits.view(np.float32).astype(np.float64)
    ok = val == np.abs(native)

    back_p = np.where(p == 0, 0, p - 2)
    back_v = np.where(p == 0, fv >> 3, fv)
    enc = (
        (b.astype(np.uint32) << np.uint32(e + m))
        | (back_p.astype(np.uint32) << np.uint32(m))
        | back_v.astype(np.uint32)
    )
    ok &= enc == bits
    return int(np.count_nonzero(finite & ~ok))


def _roundtrip64_np(bits: np.ndarray) -> int:
    bits = np.ascontiguousarray(bits, dtype=np.uint64)
    e, m = 11, 52
    b = (bits >> np.uint64(e + m)).astype(np.int64)
    p_ieee = ((bits >> np.uint64(m)) & np.uint64((1 << e) - 1)).astype(np.int64)
    v = (bits & np.uint64((1 << m) - 1)).astype(np.int64)
    finite = p_ieee != (1 << e) - 1

    p = np.where(p_ieee == 0, 0, p_ieee + 2)
    fv = np.where(p_ieee == 0, v << 3, v)

    # fv is at most 2^55 - 8 with three low zero bits, so float64 is exact
    mant = np.where(p > 0, fv + (1 << m), fv).astype(np.float64)
    with np.errstate(over="ignore"):
        val = np.ldexp(mant, (p - 1077).astype(np.int32))
    native = bits.view(np.float64)
    ok = val == np.abs(native)

    back_p = np.where(p == 0, 0, p - 2)
    back_v = np.where(p == 0, fv >> 3, fv)
    enc = (
        (b.astype(np.uint64) << np.uint64(e + m))
        | (back_p.astype(np.uint64) << np.uint64(m))
        | back_v.astype(np.uint64)
    )
    ok &= enc == bits
    return int(np.count_nonzero(finite & ~ok))


def _fl2sa_np(b, v, p, m: int, w: int, alpha: int, beta: int) -> np.ndarray:
    """Spread a batch of frames onto the grid; int64 blocks [n, alpha]."""
    b = np.asarray(b, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    p = np.asarray(p, dtype=np.int64)
    n = b.shape[0]
    gamma = w.bit_length() - 1
    mask = np.int64((1 << w) - 1)
    p_high = p >> gamma
    p_low = p & np.int64(w - 1)
    mant = v + np.where(p != 0, np.int64(1 << m), np.int64(0))
    sign = 1 - 2 * b
    out = np.zeros((n, alpha), dtype=np.int64)
    rows = np.arange(n)
    for u in range(beta):
        lo = np.int64(w * u) - p_low
        # clamp: a shift count can reach 64 at the top window block, where
        # the mantissa (< 2^55) contributes nothing anyway
        rsh = np.minimum(np.maximum(lo, 0), 63)
        lsh = np.maximum(-lo, 0)
        # mask before the left shift so int64 never overflows
        blk = np.where(lo >= 0, (mant >> rsh) & mask, (mant & (mask >> lsh)) << lsh)
        idx = p_high + u
        keep = idx < alpha
        out[rows[keep], idx[keep]] += (sign * blk)[keep]
    return out


def _regularize_np(cols: np.ndarray, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Balanced carry split on a batch of column sums [n, alpha]."""
    cols = np.asarray(cols, dtype=np.int64)
    sigma = np.where(cols < 0, np.int64(-1), np.int64(1))
    a = np.abs(cols)
    nxt = (a + np.int64(1 << (w - 1))) >> np.int64(w)
    r = a - (nxt << np.int64(w))
    out = sigma * r
    carry = sigma * nxt
    out[:, 1:] += carry[:, :-1]
    return out, carry[:, -1].copy()


def _acc_values_np(blocks: np.ndarray, w: int) -> np.ndarray:
    """Exact int64 value per accumulator row (requires w*alpha <= 62)."""
    blocks = np.asarray(blocks, dtype=np.int64)
    alpha = blocks.shape[1]
    if w * alpha > 62:
        raise ValueError("value exceeds int64; use the big-integer oracle")
    weights = np.int64(1) << (np.int64(w) * np.arange(alpha, dtype=np.int64))
    return blocks @ weights


# --- numba backend -----------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True, parallel=True)
    def _roundtrip32_nb(bits, native):  # pragma: no cover - via public name
        bad = 0
        for i in prange(bits.shape[0]):
            u = bits[i]
            b = np.int64(u >> np.uint32(31))
            p_ieee = np.int64((u >> np.uint32(23)) & np.uint32(0xFF))
            v = np.int64(u & np.uint32(0x7FFFFF))
            if p_ieee == 0xFF:
                continue
            if p_ieee == 0:
                p = np.int64(0)
                fv = v << 3
            else:
                p = p_ieee + 2
                fv = v
            mant = float(fv + (1 << 23)) if p > 0 else float(fv)
            val = math.ldexp(mant, int(p - 152))
            ok = val == abs(native[i])
            back_p = np.int64(0) if p == 0 else p - 2
            back_v = fv >> 3 if p == 0 else fv
            enc = (
                (np.uint32(b) << np.uint32(31))
                | (np.uint32(back_p) << np.uint32(23))
                | np.uint32(back_v)
            )
            if enc != u:
                ok = False
            if not ok:
                bad += 1
        return bad

    @njit(cache=True, parallel=True)
    def _roundtrip64_nb(bits, native):  # pragma: no cover
        bad = 0
        for i in prange(bits.shape[0]):
            u = bits[i]
            b = np.int64(u >> np.uint64(63))
            p_ieee = np.int64((u >> np.uint64(52)) & np.uint64(0x7FF))
            v = np.int64(u & np.uint64(0xFFFFFFFFFFFFF))
            if p_ieee == 0x7FF:
                continue
            if p_ieee == 0:
                p = np.int64(0)
                fv = v << 3
            else:
                p = p_ieee + 2
                fv = v
            mant = float(fv + (1 << 52)) if p > 0 else float(fv)
            val = math.ldexp(mant, int(p - 1077))
            ok = val == abs(native[i])
            back_p = np.int64(0) if p == 0 else p - 2
            back_v = fv >> 3 if p == 0 else fv
            enc = (
                (np.uint64(b) << np.uint64(63))
                | (np.uint64(back_p) << np.uint64(52))
                | np.uint64(back_v)
            )
            if enc != u:
                ok = False
            if not ok:
                bad += 1
        return bad

    @njit(cache=True)
    def _fl2sa_nb_core(b, v, p, m, w, alpha, beta, gamma, out):  # pragma: no cover
        mask = np.int64((1 << w) - 1)
        for i in range(b.shape[0]):
            p_high = p[i] >> gamma
            p_low = p[i] & (w - 1)
            mant = v[i] + ((np.int64(1) << m) if p[i] != 0 else np.int64(0))
            sign = 1 - 2 * b[i]
            for u in range(beta):
                lo = w * u - p_low
                if lo >= 0:
                    blk = (mant >> min(lo, 63)) & mask
                else:
                    blk = (mant & (mask >> (-lo))) << (-lo)
                idx = p_high + u
                if idx < alpha:
                    out[i, idx] += sign * blk

    def _fl2sa_nb(b, v, p, m, w, alpha, beta):
        b = np.ascontiguousarray(b, dtype=np.int64)
        v = np.ascontiguousarray(v, dtype=np.int64)
        p = np.ascontiguousarray(p, dtype=np.int64)
        out = np.zeros((b.shape[0], alpha), dtype=np.int64)
        _fl2sa_nb_core(b, v, p, np.int64(m), np.int64(w), np.int64(alpha),
                       np.int64(beta), np.int64(w.bit_length() - 1), out)
        return out

    @njit(cache=True)
    def _regularize_nb_core(cols, w, out, dropped):  # pragma: no cover
        half = np.int64(1) << (w - 1)
        for i in range(cols.shape[0]):
            sig_prev = np.int64(1)
            carry = np.int64(0)
            for j in range(cols.shape[1]):
                s = cols[i, j]
                sigma = np.int64(-1) if s < 0 else np.int64(1)
                a = -s if s < 0 else s
                nxt = (a + half) >> w
                r = a - (nxt << w)
                out[i, j] = sigma * r + sig_prev * carry
                sig_prev = sigma
                carry = nxt
            dropped[i] = sig_prev * carry

    def _regularize_nb(cols, w):
        cols = np.ascontiguousarray(cols, dtype=np.int64)
        out = np.empty_like(cols)
        dropped = np.empty(cols.shape[0], dtype=np.int64)
        _regularize_nb_core(cols, np.int64(w), out, dropped)
        return out, dropped


# --- public names ------------------------------------------------------

if HAS_NUMBA:
    BACKEND = "numba"

    def codec_roundtrip32(bits) -> int:
        bits = np.ascontiguousarray(bits, dtype=np.uint32)
        with np.errstate(invalid="ignore"):
            native = bits.view(np.float32).astype(np.float64)
        return int(_roundtrip32_nb(bits, native))

    def codec_roundtrip64(bits) -> int:
        bits = np.ascontiguousarray(bits, dtype=np.uint64)
        return int(_roundtrip64_nb(bits, bits.view(np.float64)))

    fl2sa_blocks = _fl2sa_nb
    column_regularize = _regularize_nb
else:
    BACKEND = "numpy"
    codec_roundtrip32 = _roundtrip32_np
    codec_roundtrip64 = _roundtrip64_np
    fl2sa_blocks = _fl2sa_np
    column_regularize = _regularize_np

acc_values_i64 = _acc_values_np

# the vectorized implementations stay importable under either backend so
# the benchmark (and the backend-agreement test) can compare both
numpy_backend = {
    "codec_roundtrip32": _roundtrip32_np,
    "codec_roundtrip64": _roundtrip64_np,
    "fl2sa_blocks": _fl2sa_np,
    "column_regularize": _regularize_np,
}
