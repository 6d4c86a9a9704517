"""Benchmark harness for the shared-float summation stack.

Runs the pipeline on seeded inputs, times each phase, pulls the
communication bill from the cost ledger, and verifies every opened
result against the plaintext reference before reporting anything —
a mismatch aborts the benchmark rather than producing a pretty number
for a wrong answer.

Phase bits and rounds come from the ledger and are deterministic for a
given configuration; wall-clock times are recorded per trial but nothing
is ever gated on them.  Protocols run one lane batch per call on one
thread per party.

With ``transport="tcp"`` and a ``party_id`` the process joins a session
driven by three separate processes; the ledger then only sees this
party's sends, so reported bits are one third of the session total.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, codec
from .blocks import bitdec, convert, eqz, msb, prefix_and, prefix_or, trunc
from .costs import CostReport, compare
from .oracle import plain_flsum
from .params import FpParams, derive_params
from .primitives import b2a, dot_product, edabit, mult, open_shares, rand_bit
from .protocols import (
    b2u,
    fl2sa,
    normalize,
    open_float,
    sa2fl,
    sasum_tree,
    share_floats,
    shift,
)
from .ring import share_bits_plaintext, share_plaintext
from .runtime import run_parties, setup_three_parties

SCHEMA_VERSION = 1

#: Phase names a record can carry, in reporting order.
PHASES = ("FL2SA", "SASum", "SA2FL", "Total", "B2A")

CSV_FIELDS = (
    "schema_version",
    "kind",
    "precision",
    "w",
    "n",
    "trials",
    "transport",
    "seed",
    "generator",
    "phase",
    "bits",
    "rounds",
    "mean_s",
    "median_s",
    "correct",
)


class CorrectnessError(RuntimeError):
    """An opened benchmark result disagreed with the plaintext reference."""


@dataclass(frozen=True)
class BenchConfig:
    precision: str = "single"
    w: int = 16
    n: int = 64
    trials: int = 3
    transport: str = "simulated"
    endpoints: tuple | None = None
    party_id: int | None = None
    seed: int = 0
    generator: str = "uniform"

    def __post_init__(self):
        if self.transport == "tcp" and self.endpoints is None and self.party_id is not None:
            raise ValueError("joining a tcp session by party id requires endpoints")
        if self.transport != "tcp" and (self.endpoints or self.party_id):
            raise ValueError("endpoints and party-id only apply to the tcp transport")
        if self.trials < 1:
            raise ValueError("need at least one trial")


@dataclass(frozen=True)
class PhaseStats:
    bits: int
    rounds: int
    mean_s: float
    median_s: float


@dataclass(frozen=True)
class BenchRecord:
    config: BenchConfig
    kind: str
    phases: dict
    correct: bool


# ---------------------------------------------------------------------------
# Input generators.  Each is seeded and returns n frame triples (b, v, p).


def gen_uniform(n: int, prm: FpParams, rng: np.random.Generator) -> list:
    """Uniformly random finite bit patterns (subnormals included)."""
    e, m = prm.e, prm.m
    emask = (1 << e) - 1
    frames = []
    while len(frames) < n:
        bits = int(rng.integers(0, 1 << (1 + e + m), dtype=np.uint64))
        if (bits >> m) & emask == emask:
            continue  # infinity or NaN
        frames.append(codec.float_to_frame(codec.bits_float(bits, e, m), e, m))
    return frames


def gen_cancellation(n: int, prm: FpParams, rng: np.random.Generator) -> list:
    """Pairs (x, -x) in shuffled order; an odd n leaves one survivor."""
    frames = []
    for b, v, p in gen_uniform((n + 1) // 2, prm, rng):
        frames.append((b, v, p))
        frames.append((1 - b, v, p))
    frames = frames[:n]
    return [frames[i] for i in rng.permutation(len(frames))]


def gen_wide_exponent(n: int, prm: FpParams, rng: np.random.Generator) -> list:
    """Exponents drawn uniformly across the whole finite range."""
    e, m = prm.e, prm.m
    frames = []
    for _ in range(n):
        sign = int(rng.integers(0, 2))
        p_ieee = int(rng.integers(0, (1 << e) - 1))
        mant = int(rng.integers(0, 1 << m, dtype=np.uint64))
        bits = (sign << (e + m)) | (p_ieee << m) | mant
        frames.append(codec.float_to_frame(codec.bits_float(bits, e, m), e, m))
    return frames


GENERATORS = {
    "uniform": gen_uniform,
    "cancellation": gen_cancellation,
    "wide-exponent": gen_wide_exponent,
}


# ---------------------------------------------------------------------------
# Benchmarks.


def _session(cfg: BenchConfig):
    return setup_three_parties(
        cfg.transport,
        seed=cfg.seed,
        endpoints=cfg.endpoints,
        party_id=cfg.party_id,
    )


def _phase_meter(ledger, labels) -> dict:
    meter = {}
    total_bits = total_rounds = 0
    for phase, label in labels:
        bits = ledger.label_bits(label)
        rounds = ledger.label_rounds(label)
        meter[phase] = (bits, rounds)
        total_bits += bits
        total_rounds += rounds
    meter["Total"] = (total_bits, total_rounds)
    return meter


def run_flsum_bench(cfg: BenchConfig) -> BenchRecord:
    """Time and meter fl2sa / sasum-tree / sa2fl on seeded inputs.

    The opened sum must match the plaintext reference frame bit for bit;
    a disagreement raises :class:`CorrectnessError` with a diagnostic.
    """
    prm = derive_params(cfg.precision, cfg.w)
    gen = GENERATORS.get(cfg.generator)
    if gen is None:
        raise ValueError(
            f"unknown generator {cfg.generator!r} (have {sorted(GENERATORS)})"
        )
    rng = np.random.default_rng(cfg.seed)
    frames = gen(cfg.n, prm, rng)
    expected = plain_flsum(frames, prm)
    times = {name: [] for name in ("FL2SA", "SASum", "SA2FL", "Total")}
    meter = None

    for trial in range(cfg.trials):
        share_rng = np.random.default_rng((cfg.seed, trial))
        shares = share_floats(frames, prm, share_rng)
        ctxs, ledger = _session(cfg)

        def party(ctx):
            t0 = time.perf_counter()
            grid = fl2sa(ctx, shares[ctx.pid], prm)
            t1 = time.perf_counter()
            acc = sasum_tree(ctx, grid, prm)
            t2 = time.perf_counter()
            out = sa2fl(ctx, acc, prm)
            t3 = time.perf_counter()
            opened = open_float(ctx, out, prm)
            return opened, (t1 - t0, t2 - t1, t3 - t2, t3 - t0)

        results = run_parties(ctxs, party)
        for pid, (opened, _) in results.items():
            got = tuple(int(x) for x in opened)
            if got != expected:
                raise CorrectnessError(
                    f"flsum mismatch at party {pid} for {cfg}: "
                    f"opened frame {got}, reference frame {expected}"
                )
        trial_meter = _phase_meter(
            ledger, [("FL2SA", "fl2sa"), ("SASum", "sasum"), ("SA2FL", "sa2fl")]
        )
        if meter is None:
            meter = trial_meter
        elif meter != trial_meter:
            raise CorrectnessError(
                f"non-deterministic communication bill for {cfg}: "
                f"{meter} then {trial_meter}"
            )
        for name, idx in (("FL2SA", 0), ("SASum", 1), ("SA2FL", 2), ("Total", 3)):
            times[name].append(max(r[1][idx] for r in results.values()))

    phases = {
        name: PhaseStats(
            bits=meter[name][0],
            rounds=meter[name][1],
            mean_s=statistics.fmean(times[name]),
            median_s=statistics.median(times[name]),
        )
        for name in ("FL2SA", "SASum", "SA2FL", "Total")
    }
    return BenchRecord(config=cfg, kind="flsum", phases=phases, correct=True)


def run_b2a_bench(cfg: BenchConfig) -> BenchRecord:
    """Meter bit-to-arithmetic conversion of n shared bits at k = 2w.

    Besides checking the opened values, asserts the conversion's exact
    bill: 3k bits per lane in the full session (k per party), two rounds
    regardless of n.
    """
    k = 2 * cfg.w
    if not 1 <= k <= 64:
        raise ValueError(f"b2a benchmark needs 1 <= 2w <= 64, got w={cfg.w}")
    rng = np.random.default_rng(cfg.seed)
    secret = rng.integers(0, 2, size=cfg.n, dtype=np.uint64)
    times = []
    meter = None

    for trial in range(cfg.trials):
        share_rng = np.random.default_rng((cfg.seed, trial))
        shares = share_bits_plaintext(secret, share_rng)
        ctxs, ledger = _session(cfg)

        def party(ctx):
            t0 = time.perf_counter()
            y = b2a(ctx, shares[ctx.pid], k)
            elapsed = time.perf_counter() - t0
            return open_shares(ctx, y), elapsed

        results = run_parties(ctxs, party)
        for pid, (opened, _) in results.items():
            if not np.array_equal(opened, secret):
                raise CorrectnessError(
                    f"b2a mismatch at party {pid} for {cfg}: "
                    f"opened {opened!r}, expected {secret!r}"
                )
        bits = ledger.label_bits("b2a")
        rounds = ledger.label_rounds("b2a")
        parties = 1 if cfg.party_id is not None else 3
        if bits != parties * k * cfg.n or rounds != 2:
            raise CorrectnessError(
                f"b2a bill for {cfg}: measured {bits} bits / {rounds} rounds, "
                f"expected {parties * k * cfg.n} bits / 2 rounds"
            )
        if meter is None:
            meter = (bits, rounds)
        times.append(max(r[1] for r in results.values()))

    phases = {
        "B2A": PhaseStats(
            bits=meter[0],
            rounds=meter[1],
            mean_s=statistics.fmean(times),
            median_s=statistics.median(times),
        )
    }
    return BenchRecord(config=cfg, kind="b2a", phases=phases, correct=True)


def scaling_selftest(
    precision: str = "single", w: int = 16, seed: int = 0
) -> dict:
    """Machine checks on how the communication bill scales with n.

    Returns {check name: bool}.  The per-invocation bills of the
    elementary operations are additionally asserted by every session's
    ledger teardown.
    """
    base = BenchConfig(precision=precision, w=w, trials=1, seed=seed)
    r = {n: run_flsum_bench(replace(base, n=n)) for n in (1, 4, 16)}
    b = {n: run_b2a_bench(replace(base, w=30, n=n)) for n in (1, 16, 32)}
    ph = lambda n, name: r[n].phases[name]  # noqa: E731

    checks = {
        "flsum-matches-reference": all(rec.correct for rec in r.values()),
        "fl2sa-bits-linear-in-n": all(
            ph(n, "FL2SA").bits == n * ph(1, "FL2SA").bits for n in (4, 16)
        ),
        "sasum-bits-constant-within-layer": len(
            {ph(n, "SASum").bits for n in (1, 4, 16)}
        )
        == 1,
        "sa2fl-bits-constant": len({ph(n, "SA2FL").bits for n in (1, 4, 16)}) == 1,
        "b2a-bill-exact-at-k60": b[1].phases["B2A"].bits == 180
        and b[16].phases["B2A"].bits == 16 * 180,
        "b2a-bits-double-with-n": b[32].phases["B2A"].bits
        == 2 * b[16].phases["B2A"].bits,
        "b2a-rounds-constant": {rec.phases["B2A"].rounds for rec in b.values()}
        == {2},
    }
    return checks


def run_cost_report(precision: str, w: int, seed: int = 0) -> CostReport:
    """Run every modeled protocol standalone and compare it to its formula.

    Each protocol gets its own session and its own parameter point, all
    derived from the floating-point configuration; the merged report
    carries one row per protocol.
    """
    prm = derive_params(precision, w)
    k = prm.k
    k2 = 64 if k == 32 else 32
    rng = np.random.default_rng(seed)

    def arith(shape=(1,), k_=None):
        width = k if k_ is None else k_
        vals = rng.integers(0, 2, size=shape, dtype=np.uint64)
        return share_plaintext(vals, width, rng)

    def bits(shape=(1,)):
        return share_bits_plaintext(
            rng.integers(0, 2, size=shape, dtype=np.uint64), rng
        )

    sh_a, sh_b = arith(), arith()
    sh_va, sh_vb = arith((1, 4)), arith((1, 4))
    sh_bit = bits()
    sh_pref = bits((k,))
    sh_win = arith((prm.beta - 1,))
    sh_amt = share_plaintext(np.array(3, dtype=np.uint64), k, rng)
    sh_sel = arith()
    sh_norm = arith((prm.beta,))

    runners = [
        ("mult", {"k": k}, lambda ctx: mult(ctx, sh_a[ctx.pid], sh_b[ctx.pid])),
        ("dot", {"k": k}, lambda ctx: dot_product(ctx, sh_va[ctx.pid], sh_vb[ctx.pid])),
        ("open", {"k": k}, lambda ctx: open_shares(ctx, sh_a[ctx.pid])),
        ("b2a", {"k": k}, lambda ctx: b2a(ctx, sh_bit[ctx.pid], k)),
        ("rand_bit", {"k": k}, lambda ctx: rand_bit(ctx, k, 1)),
        ("edabit", {"k": k, "ell": k}, lambda ctx: edabit(ctx, k, k, 1)),
        ("prefix_and", {"n": k}, lambda ctx: prefix_and(ctx, sh_pref[ctx.pid])),
        ("prefix_or", {"n": k}, lambda ctx: prefix_or(ctx, sh_pref[ctx.pid])),
        ("msb", {"k": k}, lambda ctx: msb(ctx, sh_a[ctx.pid])),
        ("eqz", {"k": k}, lambda ctx: eqz(ctx, sh_a[ctx.pid], k)),
        ("trunc", {"k": k, "ell": k, "u": prm.w},
         lambda ctx: trunc(ctx, sh_a[ctx.pid], k, prm.w)),
        ("bitdec", {"k": k, "ell": prm.w},
         lambda ctx: bitdec(ctx, sh_a[ctx.pid], prm.w)),
        ("convert", {"k": k, "k2": k2},
         lambda ctx: convert(ctx, sh_a[ctx.pid], k2)),
        ("shift", {"k": k, "w": prm.w, "beta": prm.beta},
         lambda ctx: shift(ctx, sh_win[ctx.pid], sh_amt[ctx.pid], prm)),
        ("b2u", {"k": k, "alpha": prm.alpha},
         lambda ctx: b2u(ctx, sh_sel[ctx.pid], prm.alpha)),
        ("normalize", {"k": k, "w": prm.w, "beta": prm.beta, "m": prm.m},
         lambda ctx: normalize(ctx, sh_norm[ctx.pid], None, prm)),
    ]

    rows = []
    merged = {"precision": precision, "w": prm.w, "k": k, "alpha": prm.alpha,
              "beta": prm.beta, "m": prm.m}
    for name, params, fn in runners:
        ctxs, ledger = setup_three_parties(seed=seed)

        def drive(ctx, _fn=fn):
            _fn(ctx)
            return None

        run_parties(ctxs, drive)
        report = compare(ledger, params, protocols=[name])
        rows.extend(report.rows)
    return CostReport(rows=tuple(rows), lanes=1, params=merged)


# ---------------------------------------------------------------------------
# Kernel backend benchmark (batch plaintext paths).


def run_kernel_bench(n: int = 1_000_000, seed: int = 0) -> str:
    """Time the selected kernel backend against the vectorized numpy one.

    Both backends must agree on every output before any timing is
    reported.  Returns an aligned text table.
    """
    rng = np.random.default_rng(seed)
    prm = derive_params("single", 16)
    bits32 = rng.integers(0, 1 << 32, size=n, dtype=np.uint64).astype(np.uint32)
    bits64 = rng.integers(0, 1 << 64, size=n, dtype=np.uint64)
    fb = rng.integers(0, 2, size=n).astype(np.int64)
    fv = rng.integers(0, 1 << prm.m, size=n).astype(np.int64)
    fp = rng.integers(0, (1 << prm.e) + 2, size=n).astype(np.int64)
    cols = rng.integers(-(1 << 40), 1 << 40, size=(max(n // 8, 1), prm.alpha))
    cols = cols.astype(np.int64)

    cases = [
        ("codec_roundtrip32", _kernels.codec_roundtrip32,
         _kernels.numpy_backend["codec_roundtrip32"], (bits32,)),
        ("codec_roundtrip64", _kernels.codec_roundtrip64,
         _kernels.numpy_backend["codec_roundtrip64"], (bits64,)),
        ("fl2sa_blocks", _kernels.fl2sa_blocks,
         _kernels.numpy_backend["fl2sa_blocks"],
         (fb, fv, fp, prm.m, prm.w, prm.alpha, prm.beta)),
        ("column_regularize", _kernels.column_regularize,
         _kernels.numpy_backend["column_regularize"], (cols, prm.w)),
    ]

    def agree(a, b):
        if isinstance(a, tuple):
            return all(agree(x, y) for x, y in zip(a, b))
        if isinstance(a, np.ndarray):
            return np.array_equal(a, b)
        return a == b

    def best_of(fn, args, reps=3):
        best = float("inf")
        for _ in range(reps):
            t0 = time.perf_counter()
            fn(*args)
            best = min(best, time.perf_counter() - t0)
        return best

    lines = [("kernel", "n", f"{_kernels.BACKEND} ms", "numpy ms", "speedup")]
    for name, selected, reference, args in cases:
        got, want = selected(*args), reference(*args)  # also warms up the jit
        if not agree(got, want):
            raise CorrectnessError(f"kernel backends disagree on {name}")
        rows = args[0].shape[0]
        t_sel = best_of(selected, args)
        t_ref = best_of(reference, args)
        lines.append(
            (name, str(rows), f"{t_sel * 1e3:.2f}", f"{t_ref * 1e3:.2f}",
             f"{t_ref / t_sel:.2f}x")
        )
    widths = [max(len(row[i]) for row in lines) for i in range(len(lines[0]))]
    out = [f"kernel backend: {_kernels.BACKEND}"]
    for i, row in enumerate(lines):
        out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


# ---------------------------------------------------------------------------
# Report serialization.


def record_to_dict(rec: BenchRecord) -> dict:
    cfg = rec.config
    return {
        "kind": rec.kind,
        "config": {
            "precision": cfg.precision,
            "w": cfg.w,
            "n": cfg.n,
            "trials": cfg.trials,
            "transport": cfg.transport,
            "endpoints": [list(ep) for ep in cfg.endpoints] if cfg.endpoints else None,
            "party_id": cfg.party_id,
            "seed": cfg.seed,
            "generator": cfg.generator,
        },
        "phases": {
            name: {
                "bits": st.bits,
                "rounds": st.rounds,
                "mean_s": st.mean_s,
                "median_s": st.median_s,
            }
            for name, st in rec.phases.items()
        },
        "correct": rec.correct,
    }


def _emit_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for rec in records:
        cfg = rec.config
        for phase in PHASES:
            if phase not in rec.phases:
                continue
            st = rec.phases[phase]
            writer.writerow(
                [
                    SCHEMA_VERSION,
                    rec.kind,
                    cfg.precision,
                    cfg.w,
                    cfg.n,
                    cfg.trials,
                    cfg.transport,
                    cfg.seed,
                    cfg.generator,
                    phase,
                    st.bits,
                    st.rounds,
                    f"{st.mean_s:.6f}",
                    f"{st.median_s:.6f}",
                    rec.correct,
                ]
            )
    return buf.getvalue()


def _emit_table(records) -> str:
    blocks = []
    groups = {}
    for rec in records:
        key = (rec.kind, rec.config.precision, rec.config.w)
        groups.setdefault(key, []).append(rec)
    for (kind, precision, w), recs in groups.items():
        recs = sorted(recs, key=lambda r: r.config.n)
        ns = [r.config.n for r in recs]
        phase_names = [p for p in PHASES if p in recs[0].phases]
        rows = [["phase"] + [f"n={n}" for n in ns]]
        for phase in phase_names:
            rows.append(
                [phase]
                + [
                    f"{r.phases[phase].bits}b/{r.phases[phase].rounds}r"
                    for r in recs
                ]
            )
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = [f"[{kind}] precision={precision} w={w} "
                 f"(bits/rounds, correct={all(r.correct for r in recs)})"]
        for i, row in enumerate(rows):
            lines.append("  ".join(c.ljust(wd) for c, wd in zip(row, widths)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * wd for wd in widths))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def emit_report(records, format: str = "table") -> str:
    """Serialize benchmark records; field order is fixed per format."""
    if format == "json":
        return json.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "records": [record_to_dict(r) for r in records],
            },
            indent=2,
        )
    if format == "csv":
        return _emit_csv(records)
    if format == "table":
        return _emit_table(records)
    raise ValueError(f"unknown report format {format!r}")
