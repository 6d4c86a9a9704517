"""Three-party protocol runtime.

Parties run the same protocol function (SPMD) on three threads, exchanging
ring-element vectors over a pluggable transport: in-memory queues or TCP
loopback sockets.  Every message is metered into a shared CostLedger under
the sender's current scope stack, giving per-primitive bit counts and
dependency-depth round counts that tests assert against analytic values.

Wire format (TCP): 4-byte LE length, 1-byte scope tag, 1-byte width (bit 7
set for the Z_2 domain), then ceil(count*width/8) payload bytes, each
element packed LSB-first.  Metering envelopes travel as separate frames
with tag 255 and are excluded from byte counts and transcripts.
"""

from __future__ import annotations

import hashlib
import queue
import socket
import struct
import threading
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .ring import HELD, BitShare, Prg, RingElement, RssShare, mask_of

__all__ = [
    "SCOPE_TAGS",
    "Envelope",
    "CostLedger",
    "SimTransport",
    "TcpTransport",
    "PartyCtx",
    "setup_three_parties",
    "run_parties",
    "pack_payload",
    "unpack_payload",
]

# Static scope-label registry for the 1-byte wire tag.  Unknown labels map
# to 0 ("other"); 255 is reserved for metering envelopes.
SCOPE_TAGS = {
    "other": 0,
    "session": 1,
    "sync": 2,
    "input": 3,
    "mult": 4,
    "dot": 5,
    "open": 6,
    "b2a": 7,
    "rand_bit": 8,
    "edabit": 9,
    "bit_add": 10,
    "eqz": 11,
    "msb": 12,
    "trunc": 13,
    "bitdec": 14,
    "prefix_and": 15,
    "prefix_or": 16,
    "all_or": 17,
    "convert": 18,
    "b2u": 19,
    "shift": 20,
    "fl2sa": 21,
    "sasum": 22,
    "sa2fl": 23,
    "normalize": 24,
    "flsum": 25,
    "bench": 26,
    "selftest": 27,
}
_META_TAG = 255
_TAG_NAMES = {v: k for k, v in SCOPE_TAGS.items()}

SIM_TIMEOUT = 120.0


def pack_payload(arr: np.ndarray, width: int) -> bytes:
    """Canonical packing: each element's low `width` bits, LSB-first."""
    flat = arr.ravel()
    if width == 1:
        bits = (flat & 1).astype(np.uint8)
    else:
        shifts = np.arange(width, dtype=np.uint64)
        bits = ((flat.astype(np.uint64)[:, None] >> shifts) & np.uint64(1)).astype(np.uint8).ravel()
    return np.packbits(bits, bitorder="little").tobytes()


def unpack_payload(buf: bytes, width: int, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), count=count * width, bitorder="little")
    if width == 1:
        return bits.copy()
    m = bits.reshape(count, width).astype(np.uint64)
    return (m << np.arange(width, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)


@dataclass
class Envelope:
    """Metering side-channel for one message (never counted as traffic)."""

    seq: int
    levels: tuple  # ((label, occurrence, depth), ...) outermost first
    width: int
    count: int
    domain: int  # 0 = Z_{2^k}, 1 = Z_2

    def to_bytes(self) -> bytes:
        out = [struct.pack("<IBBI", self.seq, self.domain, self.width, self.count),
               struct.pack("<B", len(self.levels))]
        for label, occ, depth in self.levels:
            out.append(struct.pack("<BII", SCOPE_TAGS.get(label, 0), occ, depth))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Envelope":
        seq, domain, width, count = struct.unpack_from("<IBBI", buf, 0)
        (nlev,) = struct.unpack_from("<B", buf, 10)
        levels = []
        off = 11
        for _ in range(nlev):
            tag, occ, depth = struct.unpack_from("<BII", buf, off)
            off += 9
            levels.append((_TAG_NAMES.get(tag, "other"), occ, depth))
        return cls(seq, tuple(levels), width, count, domain)


class _Poison:
    pass


_POISON = _Poison()


class SimTransport:
    """In-memory transport: one FIFO per directed channel, arrays by reference."""

    def __init__(self):
        self._q = {(i, j): queue.Queue() for i in (1, 2, 3) for j in (1, 2, 3) if i != j}

    def send(self, frm: int, to: int, arr: np.ndarray, env: Envelope):
        self._q[(frm, to)].put((arr, env))

    def recv(self, frm: int, to: int):
        try:
            item = self._q[(frm, to)].get(timeout=SIM_TIMEOUT)
        except queue.Empty:
            raise RuntimeError(f"party {to} timed out waiting on party {frm}") from None
        if isinstance(item, _Poison):
            raise RuntimeError(f"channel {frm}->{to} aborted (peer failed)")
        return item

    def poison(self, frm: int):
        for (i, j), q in self._q.items():
            if i == frm:
                q.put(_POISON)

    def close(self):
        pass


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        r = sock.recv_into(view[got:], n - got)
        if r == 0:
            raise RuntimeError("connection closed mid-frame")
        got += r
    return bytes(buf)


def _frame(tag: int, width_byte: int, payload: bytes) -> bytes:
    return struct.pack("<IBB", 2 + len(payload), tag, width_byte) + payload


class TcpTransport:
    """Loopback TCP transport.

    Party i listens on endpoints[i-1]; party j>i connects to it and sends a
    one-byte hello naming itself, yielding one bidirectional socket per
    unordered pair.  A writer thread per directed channel keeps large
    simultaneous sends from deadlocking.  `party_ids` selects which parties
    live in this process (all three by default; a single id joins an
    existing session, as driven by the CLI's --party-id).
    """

    def __init__(self, endpoints=None, party_ids=(1, 2, 3), timeout=120.0):
        self.party_ids = tuple(party_ids)
        self.timeout = timeout
        if endpoints is None:
            if self.party_ids != (1, 2, 3):
                raise ValueError("explicit endpoints required when joining as one party")
            endpoints = [("127.0.0.1", 0)] * 3
        self.endpoints = list(endpoints)
        self._socks = {}  # (local, peer) -> socket
        self._wq = {}  # (local, peer) -> write queue
        self._writers = []
        self._connect_all()
        for key in self._socks:
            q = queue.Queue()
            self._wq[key] = q
            t = threading.Thread(target=self._writer, args=(self._socks[key], q), daemon=True)
            t.start()
            self._writers.append(t)

    # -- session establishment -------------------------------------------
    def _connect_all(self):
        listeners = {}
        for pid in self.party_ids:
            expected = [j for j in (1, 2, 3) if j > pid]
            if not expected:
                continue
            host, port = self.endpoints[pid - 1]
            ls = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            ls.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            ls.bind((host, port))
            ls.listen(len(expected))
            ls.settimeout(self.timeout)
            self.endpoints[pid - 1] = ls.getsockname()
            listeners[pid] = (ls, set(expected))

        def accept_for(pid):
            ls, expected = listeners[pid]
            while expected:
                conn, _ = ls.accept()
                hello = _read_exact(conn, 1)[0]
                if hello not in expected:
                    conn.close()
                    raise RuntimeError(f"unexpected hello {hello} at party {pid}")
                expected.discard(hello)
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                conn.settimeout(self.timeout)
                self._socks[(pid, hello)] = conn
            ls.close()

        threads = [threading.Thread(target=accept_for, args=(pid,), daemon=True)
                   for pid in listeners]
        for t in threads:
            t.start()
        for pid in self.party_ids:
            for peer in (1, 2, 3):
                if peer >= pid:
                    continue
                s = self._dial(self.endpoints[peer - 1])
                s.sendall(bytes([pid]))
                self._socks[(pid, peer)] = s
        for t in threads:
            t.join(self.timeout)
            if t.is_alive():
                raise RuntimeError("timed out establishing party connections")

    def _dial(self, endpoint):
        import time

        deadline = self.timeout
        waited = 0.0
        while True:
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            try:
                s.connect(endpoint)
                s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                s.settimeout(self.timeout)
                return s
            except OSError:
                s.close()
                if waited >= deadline:
                    raise
                time.sleep(0.05)
                waited += 0.05

    def _writer(self, sock, q):
        while True:
            chunk = q.get()
            if chunk is None:
                return
            try:
                sock.sendall(chunk)
            except OSError:
                return

    # -- data path ---------------------------------------------------------
    def send(self, frm: int, to: int, arr: np.ndarray, env: Envelope):
        width_byte = env.width | (0x80 if env.domain else 0)
        tag = SCOPE_TAGS.get(env.levels[-1][0], 0)
        meta = _frame(_META_TAG, 8, env.to_bytes())
        data = _frame(tag, width_byte, pack_payload(arr, env.width))
        self._wq[(frm, to)].put(meta + data)

    def _read_frame(self, sock):
        length, tag, width_byte = struct.unpack("<IBB", _read_exact(sock, 6))
        payload = _read_exact(sock, length - 2)
        return tag, width_byte, payload

    def recv(self, frm: int, to: int):
        sock = self._socks[(to, frm)]
        tag, _, meta = self._read_frame(sock)
        if tag != _META_TAG:
            raise RuntimeError("protocol desync: expected metering envelope")
        env = Envelope.from_bytes(meta)
        tag, width_byte, payload = self._read_frame(sock)
        if (width_byte & 0x7F) != env.width or bool(width_byte & 0x80) != bool(env.domain):
            raise RuntimeError("frame header disagrees with envelope")
        return payload, env

    def poison(self, frm: int):
        for (local, peer), sock in list(self._socks.items()):
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass

    def close(self):
        for q in self._wq.values():
            q.put(None)
        for t in self._writers:
            t.join(1.0)
        for sock in self._socks.values():
            try:
                sock.close()
            except OSError:
                pass


class _Inst:
    """Aggregated cost of one scope instance (one (path, occurrence) pair)."""

    __slots__ = ("path", "occ", "depth", "bits", "msgs", "sizes", "direct_bits")

    def __init__(self, path, occ):
        self.path = path
        self.occ = occ
        self.depth = 0
        self.bits = [0, 0, 0]  # by sending party, including nested scopes
        self.msgs = 0  # messages sent directly under this scope
        self.sizes = set()
        self.direct_bits = 0

    @property
    def label(self):
        return self.path[-1]

    @property
    def total_bits(self):
        return sum(self.bits)


class CostLedger:
    """Shared cost accounting across the three parties.

    Bits and messages are recorded at send time under every open scope of
    the sender; `depth` is the dependency-depth round count (a message's
    depth within a scope is one more than the deepest message received
    while that scope was open).
    """

    def __init__(self, record_transcript: bool = False):
        self._lock = threading.Lock()
        self.instances = {}
        self.transcript = [] if record_transcript else None
        self.partial = False  # True when only one party's sends are visible

    def touch(self, path, occ):
        with self._lock:
            if (path, occ) not in self.instances:
                self.instances[(path, occ)] = _Inst(path, occ)

    def record_send(self, pid, levels, nbits):
        """levels: ((path, occ, depth), ...) outermost first."""
        with self._lock:
            for i, (path, occ, depth) in enumerate(levels):
                inst = self.instances.get((path, occ))
                if inst is None:
                    inst = self.instances[(path, occ)] = _Inst(path, occ)
                inst.depth = max(inst.depth, depth)
                inst.bits[pid - 1] += nbits
                if i == len(levels) - 1:
                    inst.msgs += 1
                    inst.sizes.add(nbits)
                    inst.direct_bits += nbits

    def record_transcript(self, entry):
        if self.transcript is not None:
            with self._lock:
                self.transcript.append(entry)

    def reset(self):
        with self._lock:
            self.instances.clear()
            if self.transcript is not None:
                self.transcript.clear()

    # -- queries -----------------------------------------------------------
    def label_instances(self, label):
        return sorted((inst for inst in self.instances.values() if inst.label == label),
                      key=lambda s: (s.path, s.occ))

    def label_bits(self, label) -> int:
        return sum(inst.total_bits for inst in self.label_instances(label))

    def label_rounds(self, label) -> int:
        return sum(inst.depth for inst in self.label_instances(label))

    def canonical_transcript(self):
        """Transcript sorted by (sender, receiver, sequence); deterministic
        for a fixed seed regardless of thread interleaving."""
        if self.transcript is None:
            raise RuntimeError("transcript recording was not enabled")
        with self._lock:
            return sorted(self.transcript, key=lambda e: (e[0], e[1], e[2]))

    def transcript_shape(self):
        """Like canonical_transcript but with payloads reduced to sizes."""
        return [e[:7] for e in self.canonical_transcript()]

    def check_invariants(self):
        """Per-invocation analytic costs of the four core primitives."""
        if self.partial:
            return
        with self._lock:
            insts = list(self.instances.values())
        session = self.instances.get((("session",), 0))
        if session is not None:
            assert session.total_bits == sum(i.direct_bits for i in insts), \
                "scope attribution lost messages"
        for inst in insts:
            name = f"{'/'.join(inst.path)}#{inst.occ}"
            if inst.label in ("mult", "dot", "open", "b2a"):
                assert inst.msgs == 3, f"{name}: expected 3 messages, saw {inst.msgs}"
                assert len(inst.sizes) == 1, f"{name}: non-uniform message sizes {inst.sizes}"
                size = next(iter(inst.sizes))
                assert inst.total_bits == 3 * size, f"{name}: bits {inst.total_bits} != 3*{size}"
            if inst.label in ("mult", "dot", "open"):
                assert inst.depth == 1, f"{name}: expected 1 round, saw {inst.depth}"
            elif inst.label == "b2a":
                assert inst.depth == 2, f"{name}: expected 2 rounds, saw {inst.depth}"
                assert inst.bits[0] == inst.bits[1] == inst.bits[2], \
                    f"{name}: unbalanced per-party bits {inst.bits}"


class _Frame:
    __slots__ = ("label", "path", "occ", "recv_max")

    def __init__(self, label, path, occ):
        self.label = label
        self.path = path
        self.occ = occ
        self.recv_max = 0


class _Scope:
    __slots__ = ("ctx", "label")

    def __init__(self, ctx, label):
        self.ctx = ctx
        self.label = label

    def __enter__(self):
        self.ctx._enter_scope(self.label)
        return self

    def __exit__(self, *exc):
        self.ctx._exit_scope(self.label)
        return False


class PartyCtx:
    """One party's view of a session: identity, PRG keys, transport, scopes."""

    def __init__(self, pid, transport, ledger, prgs, barrier=None):
        self.pid = pid
        self.held = HELD[pid]
        self.transport = transport
        self.ledger = ledger
        self.prg = prgs  # {key index j != pid: Prg}
        self._barrier = barrier
        self._stack = [_Frame("session", ("session",), 0)]
        self._occ = defaultdict(int)
        self._send_seq = defaultdict(int)
        self._recv_seq = defaultdict(int)
        ledger.touch(("session",), 0)

    # -- scopes -----------------------------------------------------------
    def scoped(self, label: str) -> _Scope:
        return _Scope(self, label)

    scope = scoped

    def _enter_scope(self, label):
        parent = self._stack[-1]
        path = parent.path + (label,)
        occ = self._occ[path]
        self._occ[path] += 1
        self.ledger.touch(path, occ)
        self._stack.append(_Frame(label, path, occ))

    def _exit_scope(self, label):
        top = self._stack.pop()
        assert top.label == label, f"scope mismatch: closing {label} but {top.label} is open"

    # -- messaging ----------------------------------------------------------
    def send(self, to: int, arr: np.ndarray, width: int):
        arr = np.asarray(arr)
        if arr.dtype == np.uint8:
            domain = 1
            assert width == 1, "Z_2 payloads use width 1"
            assert (arr <= 1).all(), "bit payload out of range"
        else:
            domain = 0
            arr = arr.astype(np.uint64, copy=False)
            assert (arr & ~mask_of(width)).max() == 0, f"payload exceeds width {width}"
        count = arr.size
        seq = self._send_seq[to]
        self._send_seq[to] += 1
        levels = tuple((f.label, f.occ, f.recv_max + 1) for f in self._stack)
        env = Envelope(seq, levels, width, count, domain)
        self.ledger.record_send(
            self.pid, tuple((f.path, f.occ, f.recv_max + 1) for f in self._stack),
            width * count)
        if self.ledger.transcript is not None:
            inner = self._stack[-1]
            self.ledger.record_transcript(
                (self.pid, to, seq, inner.label, inner.occ, width, count,
                 pack_payload(arr, width)))
        self.transport.send(self.pid, to, arr, env)

    def receive(self, frm: int, width: int, count: int, domain: str = "arith") -> np.ndarray:
        got, env = self.transport.recv(frm, self.pid)
        assert env.seq == self._recv_seq[frm], \
            f"sequence desync on {frm}->{self.pid}: {env.seq} != {self._recv_seq[frm]}"
        self._recv_seq[frm] += 1
        want_domain = 1 if domain == "bit" else 0
        assert env.width == width and env.count == count and env.domain == want_domain, \
            (f"unexpected message on {frm}->{self.pid}: got width={env.width} "
             f"count={env.count} domain={env.domain}, expected {width}/{count}/{want_domain}")
        inner = self._stack[-1]
        sl, so, _ = env.levels[-1]
        assert so == inner.occ and SCOPE_TAGS.get(sl, 0) == SCOPE_TAGS.get(inner.label, 0), \
            f"scope desync: message for {sl}#{so}, receiver in {inner.label}#{inner.occ}"
        for f, lev in zip(self._stack, env.levels):
            f.recv_max = max(f.recv_max, lev[2])
        if isinstance(got, np.ndarray):
            arr = got
        else:
            arr = unpack_payload(got, width, count)
            if domain == "bit":
                arr = arr.astype(np.uint8, copy=False)
        assert (arr.dtype == np.uint8) == (domain == "bit")
        return arr

    recv = receive

    # -- synchronization -----------------------------------------------------
    def barrier(self):
        if self._barrier is None:
            raise RuntimeError("no barrier in single-party mode")
        self._barrier.wait()

    def sync_reset(self):
        """Reset cost accounting at a point where all parties are quiescent."""
        assert len(self._stack) == 1, "sync_reset requires all scopes closed"
        self.barrier()
        if self.pid == 1:
            self.ledger.reset()
        self.barrier()
        self._occ.clear()
        self._send_seq.clear()
        self._recv_seq.clear()
        self._stack = [_Frame("session", ("session",), 0)]
        self.ledger.touch(("session",), 0)
        self.barrier()

    # -- sub-share plumbing ---------------------------------------------------
    def sub(self, share, idx: int) -> np.ndarray:
        """The sub-share with absolute index idx (must be held by this party)."""
        if idx == self.held[0]:
            return share.sub_a
        if idx == self.held[1]:
            return share.sub_b
        raise ValueError(f"party {self.pid} does not hold sub-share {idx}")

    def from_subs(self, pairs: dict, k: int = None):
        """Build a share from {absolute index: lane array} for both held indices."""
        lo, hi = self.held
        a, b = pairs[lo], pairs[hi]
        if k is None:
            return BitShare(np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8))
        return RssShare(k, np.asarray(a, dtype=np.uint64), np.asarray(b, dtype=np.uint64))

    def public_arith(self, c, k: int, shape=None) -> RssShare:
        """Sharing of a public constant: sub-share 1 carries c, the rest 0."""
        cv = (np.asarray(c, dtype=np.uint64) & mask_of(k))
        if shape is not None:
            cv = np.broadcast_to(cv, shape).copy()
        z = np.zeros_like(cv)
        subs = {1: cv, 2: z, 3: z}
        lo, hi = self.held
        return RssShare(k, subs[lo], subs[hi])

    def public_bits(self, c, shape=None) -> BitShare:
        cv = np.asarray(c, dtype=np.uint8) & 1
        if shape is not None:
            cv = np.broadcast_to(cv, shape).copy()
        z = np.zeros_like(cv)
        subs = {1: cv, 2: z, 3: z}
        lo, hi = self.held
        return BitShare(subs[lo], subs[hi])

    def add_public(self, x: RssShare, c) -> RssShare:
        """x + c for public c (added onto sub-share 1 by its holders)."""
        if isinstance(c, RingElement):
            c = c.value
        m = mask_of(x.k)
        cv = np.asarray(c, dtype=np.uint64) & m
        if self.pid == 1:
            return x
        return RssShare(x.k, (x.sub_a + cv) & m, x.sub_b)

    def xor_public(self, x: BitShare, c) -> BitShare:
        cv = np.asarray(c, dtype=np.uint8) & 1
        if self.pid == 1:
            return x
        return BitShare(x.sub_a ^ cv, x.sub_b)

    def flip(self, x: BitShare) -> BitShare:
        """Logical NOT of a shared bit vector."""
        return self.xor_public(x, 1)


def _derive_key(seed: int, j: int) -> bytes:
    material = b"supersum-prg" + int(seed).to_bytes(8, "little", signed=False) + bytes([j])
    return hashlib.sha256(material).digest()[:16]


def setup_three_parties(transport: str = "simulated", seed: int = 0, endpoints=None,
                        record_transcript: bool = False, party_id: int = None):
    """Create a three-party session.

    Returns ({pid: PartyCtx}, CostLedger).  With party_id set, joins an
    existing TCP session as that single party instead (the returned dict
    has one entry and the ledger only sees this party's sends).
    """
    keys = {j: _derive_key(seed, j) for j in (1, 2, 3)}
    if party_id is None:
        ledger = CostLedger(record_transcript)
        barrier = threading.Barrier(3)
        if transport == "simulated":
            tp = SimTransport()
        elif transport == "tcp":
            tp = TcpTransport(endpoints)
        else:
            raise ValueError(f"unknown transport {transport!r}")
        ctxs = {}
        for pid in (1, 2, 3):
            prgs = {j: Prg(keys[j]) for j in HELD[pid]}
            ctxs[pid] = PartyCtx(pid, tp, ledger, prgs, barrier)
        return ctxs, ledger
    if transport != "tcp":
        raise ValueError("party_id requires the tcp transport")
    ledger = CostLedger(record_transcript)
    ledger.partial = True
    tp = TcpTransport(endpoints, party_ids=(party_id,))
    prgs = {j: Prg(keys[j]) for j in HELD[party_id]}
    return {party_id: PartyCtx(party_id, tp, ledger, prgs)}, ledger


def run_parties(ctxs: dict, fn, args: dict = None, check: bool = True):
    """Run fn(ctx, *args[pid]) on one thread per party; returns {pid: result}.

    After a clean run, asserts the ledger's per-invocation primitive costs
    and that both holders of each PRG key consumed the same amount.
    """
    results, errors = {}, {}

    def target(pid):
        try:
            extra = args.get(pid, ()) if args else ()
            with np.errstate(over="ignore"):  # uint64 wrap-around is the ring semantics
                results[pid] = fn(ctxs[pid], *extra)
        except BaseException as exc:  # noqa: BLE001 - propagated below
            errors[pid] = exc
            ctxs[pid].transport.poison(pid)

    threads = [threading.Thread(target=target, args=(pid,), name=f"party-{pid}")
               for pid in sorted(ctxs)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        pid, exc = sorted(errors.items())[0]
        raise RuntimeError(f"party {pid} failed: {exc}") from exc
    if check and len(ctxs) == 3:
        ledger = next(iter(ctxs.values())).ledger
        ledger.check_invariants()
        for j in (1, 2, 3):
            counters = [ctxs[p].prg[j].counter for p in (1, 2, 3) if p != j]
            assert counters[0] == counters[1], \
                f"PRG key {j} consumed unevenly: {counters}"
    return results
