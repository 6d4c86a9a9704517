"""Replicated secret sharing over Z_{2^k} (k <= 64) and Z_2.

Values are vectors of ring elements stored in uint64 lanes (uint8 for the
bit domain) and reduced eagerly mod 2^k.  Party i holds the two sub-shares
with indices != i; HELD maps a party id to its pair of sub-share indices in
ascending order, which fixes which lane array is `sub_a` and which `sub_b`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

__all__ = [
    "RingElement",
    "RssShare",
    "BitShare",
    "Prg",
    "HELD",
    "NEXT",
    "PREV",
    "mask_of",
    "add_local",
    "scale_local",
    "mod_switch_local",
    "share_plaintext",
    "share_bits_plaintext",
    "reconstruct",
    "reconstruct_bits",
]

# Party i holds sub-shares {1,2,3} \ {i}, listed ascending.
HELD = {1: (2, 3), 2: (1, 3), 3: (1, 2)}
# Cyclic neighbours on {1,2,3}; HELD[i] == sorted((NEXT[i], PREV[i])).
NEXT = {1: 2, 2: 3, 3: 1}
PREV = {1: 3, 2: 1, 3: 2}

_U64 = np.uint64


def mask_of(k: int) -> np.uint64:
    """Bit mask for ring width k (1 <= k <= 64)."""
    if not 1 <= k <= 64:
        raise ValueError(f"ring width must be in 1..64, got {k}")
    return _U64((1 << k) - 1)


def _as_lanes(x, k: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=np.uint64))
    return arr & mask_of(k)


@dataclass(frozen=True)
class RingElement:
    """A single element of Z_{2^width_k}, reduced eagerly."""

    value: int
    width_k: int

    def __post_init__(self):
        if not 1 <= self.width_k <= 64:
            raise ValueError(f"ring width must be in 1..64, got {self.width_k}")
        object.__setattr__(self, "value", self.value & ((1 << self.width_k) - 1))

    def _check(self, other: "RingElement"):
        if self.width_k != other.width_k:
            raise ValueError("ring width mismatch")

    def __add__(self, other: "RingElement") -> "RingElement":
        self._check(other)
        return RingElement(self.value + other.value, self.width_k)

    def __sub__(self, other: "RingElement") -> "RingElement":
        self._check(other)
        return RingElement(self.value - other.value, self.width_k)

    def __mul__(self, other: "RingElement") -> "RingElement":
        self._check(other)
        return RingElement(self.value * other.value, self.width_k)

    def __neg__(self) -> "RingElement":
        return RingElement(-self.value, self.width_k)

    @property
    def signed(self) -> int:
        """Two's-complement reading (MSB is the sign)."""
        if self.value >> (self.width_k - 1):
            return self.value - (1 << self.width_k)
        return self.value


class _ShareOps:
    """Lane-wise linear operations shared by both domains."""

    __slots__ = ()

    def _like(self, a, b):
        raise NotImplementedError

    @property
    def shape(self):
        return self.sub_a.shape

    def reshape(self, *shape):
        return self._like(self.sub_a.reshape(*shape), self.sub_b.reshape(*shape))

    def __getitem__(self, idx):
        a, b = self.sub_a[idx], self.sub_b[idx]
        return self._like(np.atleast_1d(a), np.atleast_1d(b))


@dataclass(frozen=True, eq=False)
class RssShare(_ShareOps):
    """One party's holding of a replicated sharing over Z_{2^k}.

    sub_a / sub_b are the sub-shares with the lower / higher index in
    HELD[party]; uint64 lanes, always reduced mod 2^k.
    """

    k: int
    sub_a: np.ndarray
    sub_b: np.ndarray

    def _like(self, a, b):
        return RssShare(self.k, a, b)

    def _mask(self):
        return mask_of(self.k)

    def __add__(self, other: "RssShare") -> "RssShare":
        if self.k != other.k:
            raise ValueError("ring width mismatch")
        m = self._mask()
        return RssShare(self.k, (self.sub_a + other.sub_a) & m, (self.sub_b + other.sub_b) & m)

    def __sub__(self, other: "RssShare") -> "RssShare":
        if self.k != other.k:
            raise ValueError("ring width mismatch")
        m = self._mask()
        return RssShare(self.k, (self.sub_a - other.sub_a) & m, (self.sub_b - other.sub_b) & m)

    def __neg__(self) -> "RssShare":
        m = self._mask()
        return RssShare(self.k, (-self.sub_a) & m, (-self.sub_b) & m)

    def __mul__(self, c) -> "RssShare":
        """Multiply by a public constant (int or uint64 array)."""
        m = self._mask()
        c = np.asarray(c, dtype=np.uint64) & m
        return RssShare(self.k, (self.sub_a * c) & m, (self.sub_b * c) & m)

    __rmul__ = __mul__

    def __lshift__(self, n: int) -> "RssShare":
        if not 0 <= n < 64:
            raise ValueError("shift out of range")
        return self * (1 << n)


@dataclass(frozen=True, eq=False)
class BitShare(_ShareOps):
    """One party's holding of an XOR sharing over Z_2 (uint8 lanes, 0/1)."""

    sub_a: np.ndarray
    sub_b: np.ndarray

    def _like(self, a, b):
        return BitShare(a, b)

    def __xor__(self, other: "BitShare") -> "BitShare":
        return BitShare(self.sub_a ^ other.sub_a, self.sub_b ^ other.sub_b)


def _concat(shares, axis=0):
    first = shares[0]
    a = np.concatenate([s.sub_a for s in shares], axis=axis)
    b = np.concatenate([s.sub_b for s in shares], axis=axis)
    return first._like(a, b)


RssShare.concat = staticmethod(lambda shares, axis=0: _concat(shares, axis))
BitShare.concat = staticmethod(lambda shares, axis=0: _concat(shares, axis))


class Prg:
    """Deterministic keyed generator (AES-128-CTR keystream).

    Single-owner and stateful: `counter` is the number of keystream bytes
    consumed, so two holders of the same key stay in sync iff they make the
    same sequence of draws.
    """

    def __init__(self, key: bytes):
        if len(key) != 16:
            raise ValueError("Prg key must be 16 bytes")
        self.key = key
        self._enc = Cipher(algorithms.AES(key), modes.CTR(b"\x00" * 16)).encryptor()
        self.counter = 0

    def _raw(self, nbytes: int) -> bytes:
        self.counter += nbytes
        return self._enc.update(b"\x00" * nbytes)

    def elements(self, width: int, count: int) -> np.ndarray:
        """`count` uniform elements of Z_{2^width} as uint64."""
        buf = self._raw(8 * count)
        return np.frombuffer(buf, dtype="<u8") & mask_of(width)

    def bits(self, count: int) -> np.ndarray:
        """`count` uniform bits as uint8 0/1."""
        buf = self._raw((count + 7) // 8)
        return np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")[:count].copy()


# ---------------------------------------------------------------------------
# Local (communication-free) operations.


def add_local(x: RssShare, y: RssShare) -> RssShare:
    return x + y


def scale_local(c, x: RssShare) -> RssShare:
    if isinstance(c, RingElement):
        if c.width_k != x.k:
            raise ValueError("ring width mismatch")
        c = c.value
    return x * c


def mod_switch_local(x: RssShare, ell: int) -> RssShare:
    """Reduce each sub-share mod 2^ell (ell <= k)."""
    if ell > x.k:
        raise ValueError(f"mod_switch target {ell} exceeds width {x.k}")
    m = mask_of(ell)
    return RssShare(ell, x.sub_a & m, x.sub_b & m)


# ---------------------------------------------------------------------------
# Dealer-side sharing and reconstruction (test/ingestion plumbing).


def share_plaintext(x, k: int, rng: np.random.Generator):
    """Share x (int or array) into the three parties' RssShare holdings.

    Sub-shares 1 and 2 are uniform; 3 is the difference.  Returns a dict
    {party_id: RssShare}.
    """
    xv = _as_lanes(x, k)
    s1 = rng.integers(0, 1 << 64, size=xv.shape, dtype=np.uint64) & mask_of(k)
    s2 = rng.integers(0, 1 << 64, size=xv.shape, dtype=np.uint64) & mask_of(k)
    with np.errstate(over="ignore"):
        s3 = (xv - s1 - s2) & mask_of(k)
    subs = {1: s1, 2: s2, 3: s3}
    return {pid: RssShare(k, subs[lo], subs[hi]) for pid, (lo, hi) in HELD.items()}


def share_bits_plaintext(x, rng: np.random.Generator):
    """Share bits (0/1 int or array) into the three parties' BitShare holdings."""
    xv = np.asarray(x, dtype=np.uint8) & 1
    s1 = rng.integers(0, 2, size=xv.shape, dtype=np.uint8)
    s2 = rng.integers(0, 2, size=xv.shape, dtype=np.uint8)
    s3 = xv ^ s1 ^ s2
    subs = {1: s1, 2: s2, 3: s3}
    return {pid: BitShare(subs[lo], subs[hi]) for pid, (lo, hi) in HELD.items()}


def _collect_subs(holdings):
    subs = {}
    for pid, share in holdings.items():
        lo, hi = HELD[pid]
        for idx, arr in ((lo, share.sub_a), (hi, share.sub_b)):
            if idx in subs:
                if not np.array_equal(subs[idx], arr):
                    raise AssertionError(f"replica mismatch on sub-share {idx}")
            else:
                subs[idx] = arr
    return subs


def reconstruct(holdings) -> np.ndarray:
    """Combine the three parties' RssShare holdings; checks replica consistency."""
    subs = _collect_subs(holdings)
    k = next(iter(holdings.values())).k
    return (subs[1] + subs[2] + subs[3]) & mask_of(k)


def reconstruct_bits(holdings) -> np.ndarray:
    subs = _collect_subs(holdings)
    return subs[1] ^ subs[2] ^ subs[3]
