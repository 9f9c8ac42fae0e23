"""Command-line front end.

Commands: verify, compile, toffoli, syndrome, sample.  Every command takes
a master seed (default 271828) from which all randomness derives, so equal
invocations produce byte-identical output files.  Wall-clock timings are
reported in files as 0 unless --timings is given, keeping outputs
reproducible; real timings always go to stderr.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
The environment variable LRC_DENSE_LIMIT overrides the dense-dimension cap.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .channels import coherent_rotation, stochastic_weyl
from .circuits import SchemaError, parse
from .codes import BUILTIN_CODE_NAMES
from .compiler import DEFAULT_SEED, CompileError, RandomizationPolicy, instantiate
from .verify import (
    CHECK_NAMES,
    check_measurement_rc,
    check_sampling_equivalence,
    run_check,
    run_toffoli_example,
)
from .weyl import WeylOperator


def reports_to_json(reports, include_timings: bool = False) -> str:
    return (
        json.dumps(
            [r.to_dict(include_timings) for r in reports],
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n"
    )


def reports_to_csv(reports, include_timings: bool = False) -> str:
    lines = ["check,pass,value,tolerance,runtime_ms,seed"]
    for r in reports:
        ms = repr(float(r.runtime_ms)) if include_timings else "0.0"
        lines.append(
            f"{r.check},{str(bool(r.passed)).lower()},{r.value!r},{r.tolerance!r},{ms},{r.seed}"
        )
    return "\n".join(lines) + "\n"


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _summarise(reports):
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(
            f"{status} {r.check}: value={r.value:.3e} tol={r.tolerance:.3e} "
            f"({r.runtime_ms:.0f} ms)",
            file=sys.stderr,
        )


def _render(reports, fmt: str, timings: bool) -> str:
    if fmt == "csv":
        return reports_to_csv(reports, timings)
    return reports_to_json(reports, timings)


def _resolve_code(spec: str):
    """A builtin name passes through; anything else is a definition path."""
    if spec in BUILTIN_CODE_NAMES:
        return spec
    from pathlib import Path

    from .codes import load_code

    code = load_code(spec)
    name = Path(spec).stem
    return (name, code)


def cmd_verify(args) -> int:
    if not args.all and not args.check:
        print("verify needs --all or --check NAME", file=sys.stderr)
        return 2
    names = list(CHECK_NAMES) if args.all else args.check
    for name in names:
        if name not in CHECK_NAMES:
            print(
                f"unknown check {name!r}; available: {', '.join(CHECK_NAMES)}",
                file=sys.stderr,
            )
            return 2
    code = None
    if args.code is not None:
        try:
            code = _resolve_code(args.code)
        except (OSError, ValueError) as exc:
            print(f"unknown code {args.code!r}: {exc}", file=sys.stderr)
            return 2
    reports = []
    for name in names:
        reports.extend(run_check(name, args.seed, code=code))
    _summarise(reports)
    _emit(_render(reports, args.format, args.timings), args.out)
    return 0 if all(r.passed for r in reports) else 1


def cmd_compile(args) -> int:
    try:
        with open(args.circuit, "r", encoding="utf-8") as fh:
            circuit = parse(fh.read())
    except OSError as exc:
        print(f"cannot read circuit: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        print(f"invalid circuit: {exc}", file=sys.stderr)
        return 2
    if args.policy:
        try:
            with open(args.policy, "r", encoding="utf-8") as fh:
                policy = RandomizationPolicy.from_json(fh.read())
        except (OSError, ValueError, CompileError) as exc:
            print(f"invalid policy: {exc}", file=sys.stderr)
            return 2
    else:
        policy = RandomizationPolicy()
    if args.mode:
        if args.mode == "exhaustive":
            policy.mode, policy.samples = "exhaustive", 0
        elif args.mode.startswith("sampled="):
            policy.mode, policy.samples = "sampled", int(args.mode.split("=", 1)[1])
        else:
            print(f"bad --mode {args.mode!r}; use exhaustive or sampled=N", file=sys.stderr)
            return 2
    if args.seed is not None:
        policy.seed = args.seed
    try:
        instances = [inst.to_dict() for inst in instantiate(circuit, policy)]
    except CompileError as exc:
        print(f"compilation failed: {exc}", file=sys.stderr)
        return 2
    payload = {
        "schema_version": 1,
        "policy": policy.to_dict(),
        "instances": instances,
    }
    _emit(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", args.out)
    print(f"compiled {len(instances)} instance(s)", file=sys.stderr)
    return 0


def cmd_toffoli(args) -> int:
    if args.delta is None or not np.isfinite(args.delta):
        print("toffoli needs a finite --delta", file=sys.stderr)
        return 2
    report = run_toffoli_example(args.delta, blocks=args.blocks, seed=args.seed)
    _summarise([report])
    _emit(_render([report], args.format, args.timings), args.out)
    return 0 if report.passed else 1


def cmd_syndrome(args) -> int:
    if args.flip_prob is not None:
        if not 0.0 <= args.flip_prob <= 1.0:
            print("--flip-prob must lie in [0, 1]", file=sys.stderr)
            return 2
        noise = stochastic_weyl(
            {
                WeylOperator.identity(2, 1): 1.0 - args.flip_prob,
                WeylOperator.x_op(2, 1): args.flip_prob,
            }
        )
        label = f"flip={args.flip_prob:g}"
    else:
        noise = coherent_rotation(WeylOperator.x_op(2, 1), args.rotation)
        label = f"rotation={args.rotation:g}"
    try:
        report = check_measurement_rc(
            args.code, readout_noise=noise, generator=args.generator, seed=args.seed, label=label
        )
    except (ValueError, IndexError) as exc:
        print(f"syndrome check failed: {exc}", file=sys.stderr)
        return 2
    _summarise([report])
    _emit(_render([report], args.format, args.timings), args.out)
    return 0 if report.passed else 1


def cmd_sample(args) -> int:
    circuit = None
    if args.circuit:
        try:
            with open(args.circuit, "r", encoding="utf-8") as fh:
                circuit = parse(fh.read())
        except (OSError, SchemaError) as exc:
            print(f"cannot load circuit: {exc}", file=sys.stderr)
            return 2
    report = check_sampling_equivalence(circuit=circuit, shots=args.shots, seed=args.seed)
    _summarise([report])
    _emit(_render([report], args.format, args.timings), args.out)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrc",
        description="Randomizing compilation for encoded circuits, with a verification suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master seed")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument(
            "--timings",
            action="store_true",
            help="write real runtimes into the report (breaks byte reproducibility)",
        )

    p = sub.add_parser("verify", help="run verification checks")
    p.add_argument("--all", action="store_true", help="run the full registry")
    p.add_argument("--check", action="append", default=[], help="run one named check")
    p.add_argument("--code", help="restrict code-scoped checks to one builtin code")
    common(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("compile", help="randomize a circuit into compiled instances")
    p.add_argument("--circuit", required=True, help="circuit JSON path")
    p.add_argument("--policy", help="policy JSON path")
    p.add_argument("--mode", help="exhaustive or sampled=N (overrides the policy)")
    p.add_argument("--seed", type=int, default=None, help="override the policy seed")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("toffoli", help="run the three-block overrotated Toffoli experiment")
    p.add_argument("--delta", type=float, required=True, help="overrotation angle")
    p.add_argument("--blocks", choices=("all", "third"), default="all")
    common(p)
    p.set_defaults(fn=cmd_toffoli)

    p = sub.add_parser("syndrome", help="verify compiled syndrome extraction under readout noise")
    p.add_argument("--code", default="bitflip3")
    p.add_argument("--generator", type=int, default=0)
    p.add_argument("--rotation", type=float, default=0.2, help="coherent X rotation angle")
    p.add_argument("--flip-prob", type=float, default=None, help="stochastic flip probability")
    common(p)
    p.set_defaults(fn=cmd_syndrome)

    p = sub.add_parser("sample", help="compare one-shot-per-compilation sampling to the average")
    p.add_argument("--shots", type=int, default=10**5)
    p.add_argument("--circuit", help="circuit JSON path (default: builtin noisy reset+measure)")
    common(p)
    p.set_defaults(fn=cmd_sample)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.fn(args)
    except Exception as exc:  # surface as a usage/input failure, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
