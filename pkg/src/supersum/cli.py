"""Command-line driver for the benchmarks, self-checks and cost model.

Exit status is 0 only when every result verified against its reference;
correctness failures exit nonzero after printing a diagnostic.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import (
    GENERATORS,
    BenchConfig,
    CorrectnessError,
    emit_report,
    run_b2a_bench,
    run_cost_report,
    run_flsum_bench,
    run_kernel_bench,
    scaling_selftest,
)
from .costs import SCHEMA_VERSION, b2a_comparison
from .params import derive_params


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty integer list")
    return vals


def _endpoints(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "need exactly three host:port endpoints, one per party"
        )
    out = []
    for part in parts:
        host, _, port = part.rpartition(":")
        if not host or not port.isdigit():
            raise argparse.ArgumentTypeError(f"bad endpoint {part!r}")
        out.append((host, int(port)))
    return tuple(out)


def _write(path: str | None, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _add_transport_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--transport", choices=("simulated", "tcp"), default="simulated")
    p.add_argument(
        "--endpoints",
        type=_endpoints,
        help="host:port,host:port,host:port listening points for tcp",
    )
    p.add_argument(
        "--party-id",
        type=int,
        choices=(1, 2, 3),
        help="join an existing tcp session as this single party",
    )


def _add_report_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv", "table"), default="table")
    p.add_argument("--out", default="-", help="output path, - for stdout")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supersum",
        description="benchmarks and self-checks for exact shared-float summation",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    pf = sub.add_parser("flsum", help="benchmark the full summation pipeline")
    pf.add_argument("--precision", choices=("single", "double"), default="single")
    pf.add_argument("--w", type=_int_list, default=[16],
                    help="comma-separated block widths")
    pf.add_argument("--n", type=_int_list, default=[64],
                    help="comma-separated input counts")
    pf.add_argument("--trials", type=int, default=3)
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--gen", choices=sorted(GENERATORS), default="uniform",
                    help="input generator")
    _add_transport_flags(pf)
    _add_report_flags(pf)

    pb = sub.add_parser("b2a", help="benchmark bit-to-arithmetic conversion at k=2w")
    pb.add_argument("--w", type=_int_list, default=[30],
                    help="comma-separated half-widths (ring width is 2w)")
    pb.add_argument("--n", type=_int_list, default=[16],
                    help="comma-separated bit counts")
    pb.add_argument("--trials", type=int, default=3)
    pb.add_argument("--seed", type=int, default=0)
    _add_transport_flags(pb)
    _add_report_flags(pb)

    ps = sub.add_parser("selftest", help="machine checks on scaling and exact bills")
    ps.add_argument("--precision", choices=("single", "double"), default="single")
    ps.add_argument("--w", type=int, choices=(16, 32), default=16)
    ps.add_argument("--seed", type=int, default=0)

    pc = sub.add_parser("cost", help="measured versus analytical communication cost")
    pc.add_argument("--precision", choices=("single", "double"), default="single")
    pc.add_argument("--w", type=int, choices=(16, 32), default=16)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--format", choices=("json", "table"), default="table")
    pc.add_argument("--out", default="-", help="output path, - for stdout")

    pk = sub.add_parser("kernels", help="time the batch kernels on both backends")
    pk.add_argument("--n", type=int, default=1_000_000)
    pk.add_argument("--seed", type=int, default=0)
    pk.add_argument("--out", default="-", help="output path, - for stdout")

    return parser


def _bench_records(args, runner) -> list:
    records = []
    for w in args.w:
        for n in args.n:
            cfg = BenchConfig(
                precision=getattr(args, "precision", "single"),
                w=w,
                n=n,
                trials=args.trials,
                transport=args.transport,
                endpoints=args.endpoints,
                party_id=args.party_id,
                seed=args.seed,
                generator=getattr(args, "gen", "uniform"),
            )
            records.append(runner(cfg))
    return records


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.cmd == "flsum":
            _write(args.out, emit_report(_bench_records(args, run_flsum_bench),
                                         args.format))
            return 0
        if args.cmd == "b2a":
            _write(args.out, emit_report(_bench_records(args, run_b2a_bench),
                                         args.format))
            return 0
        if args.cmd == "selftest":
            checks = scaling_selftest(args.precision, args.w, args.seed)
            checks["elementary-costs-exact"] = run_cost_report(
                args.precision, args.w, args.seed
            ).ok
            for name, ok in checks.items():
                print(f"{'PASS' if ok else 'FAIL'} {name}")
            return 0 if all(checks.values()) else 1
        if args.cmd == "cost":
            report = run_cost_report(args.precision, args.w, args.seed)
            k = derive_params(args.precision, args.w).k
            lit = b2a_comparison(k)
            if args.format == "json":
                text = json.dumps(
                    {
                        "schema_version": SCHEMA_VERSION,
                        "report": json.loads(report.to_json()),
                        "b2a_constructions": lit,
                    },
                    indent=2,
                )
            else:
                lines = [report.to_table(), "",
                         f"b2a constructions at k={k} (bits/rounds):"]
                lines += [f"  {name:<8s} {d['bits']}/{d['rounds']}"
                          for name, d in lit.items()]
                text = "\n".join(lines)
            _write(args.out, text)
            return 0 if report.ok else 1
        if args.cmd == "kernels":
            _write(args.out, run_kernel_bench(args.n, args.seed))
            return 0
    except (CorrectnessError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError(f"unhandled command {args.cmd!r}")


if __name__ == "__main__":
    sys.exit(main())
