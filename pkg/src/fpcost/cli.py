"""Command-line front end.

Subcommands:
  run           measure a matrix of cells on this machine
  compare       judge saved records against a reference machine
  render        re-render saved records (markdown, csv, json)
  dump-kernels  print the generated kernel listings
  env-check     report host capabilities and clock calibration

Exit status: 0 on success, 2 when the host cannot run the measurement
kernels (not x86-64, no AVX, or executable memory is forbidden), 1 for
any other error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, fpenv, hwinfo, jit
from .errors import FpCostError, UnsupportedHost
from .fpmodel import Operation, OutcomeClass
from .harness import (
    ENVS,
    RunParams,
    compare_to_reference,
    default_matrix,
    read_records,
    run_matrix,
    write_records,
)
from .kernels import KernelVariant, dump_kernels
from .reference import bundled_table
from .report import RenderSpec, render, render_comparison, summarize


def _parse_ops(text: str) -> tuple[Operation, ...]:
    try:
        return tuple(Operation(part) for part in text.split(","))
    except ValueError:
        valid = ", ".join(op.value for op in Operation)
        raise argparse.ArgumentTypeError(f"ops must be from: {valid}")


def _parse_outcomes(text: str) -> tuple[OutcomeClass, ...]:
    try:
        return tuple(OutcomeClass(part) for part in text.split(","))
    except ValueError:
        valid = ", ".join(o.value for o in OutcomeClass)
        raise argparse.ArgumentTypeError(f"classes must be from: {valid}")


def _parse_variants(text: str) -> tuple[KernelVariant, ...]:
    if text == "both":
        return tuple(KernelVariant)
    try:
        return (KernelVariant(text),)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "variant must be regasm, memc, or both")


def _onoff(text: str) -> bool:
    if text in ("on", "1", "true"):
        return True
    if text in ("off", "0", "false"):
        return False
    raise argparse.ArgumentTypeError("expected on or off")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpcost",
        description="Per-operation cycle costs of AVX/FMA double-precision "
                    "arithmetic across operand/outcome classes, under "
                    "switchable FTZ/DAZ.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="measure on this machine")
    p_run.add_argument("--ops", type=_parse_ops, default=None,
                       help="comma-separated: add,mul,div,fma")
    p_run.add_argument("--classes", type=_parse_outcomes, default=None,
                       help="comma-separated outcome classes to keep")
    p_run.add_argument("--variant", type=_parse_variants, default=None,
                       help="regasm, memc, or both")
    p_run.add_argument("--ftz", type=_onoff, default=None, metavar="on|off",
                       help="fix flush-to-zero instead of sweeping both "
                            "environments (unset side defaults to off)")
    p_run.add_argument("--daz", type=_onoff, default=None, metavar="on|off",
                       help="fix denormals-are-zero, see --ftz")
    p_run.add_argument("--samples", type=int, default=9)
    p_run.add_argument("--warmups", type=int, default=2)
    p_run.add_argument("--min-ops", type=int, default=10_000_000,
                       help="scalar-operation floor per timed invocation")
    p_run.add_argument("--core", type=int, default=0,
                       help="core to pin to; -1 runs unpinned")
    p_run.add_argument("--seed", type=int, default=0,
                       help="lane-perturbation and shuffle seed")
    p_run.add_argument("--extended", action="store_true",
                       help="include combinations beyond the reference rows")
    p_run.add_argument("--shuffle", action="store_true",
                       help="randomize cell order")
    p_run.add_argument("--out", default=None,
                       help="write JSONL records to this path")
    p_run.add_argument("--format", choices=("markdown", "csv", "json"),
                       default="markdown")
    p_run.add_argument("--precision", type=int, default=2)
    p_run.add_argument("--basis", choices=("tsc", "core"), default="tsc",
                       help="report TSC ticks or core cycles per op")
    p_run.add_argument("--quiet", action="store_true",
                       help="suppress progress output on stderr")

    p_cmp = sub.add_parser("compare", help="compare records to a reference "
                                           "machine")
    p_cmp.add_argument("records", help="JSONL records from `fpcost run --out`")
    p_cmp.add_argument("--machine", required=True,
                       choices=sorted(bundled_table().machines),
                       help="reference machine to compare against")
    p_cmp.add_argument("--tolerance", type=float, default=2.0,
                       help="acceptable penalty disagreement factor")
    p_cmp.add_argument("--details", action="store_true",
                       help="print the per-cell comparison table")

    p_render = sub.add_parser("render", help="re-render saved records")
    p_render.add_argument("records")
    p_render.add_argument("--format", choices=("markdown", "csv", "json"),
                          default="markdown")
    p_render.add_argument("--precision", type=int, default=2)
    p_render.add_argument("--basis", choices=("tsc", "core"), default="tsc")

    p_dump = sub.add_parser("dump-kernels", help="print kernel listings")
    p_dump.add_argument("--ops", type=_parse_ops, default=None)
    p_dump.add_argument("--variant", type=_parse_variants, default=None)
    p_dump.add_argument("--unroll", type=int, default=4)

    sub.add_parser("env-check", help="report host capabilities")
    return parser


def _env_keys(args) -> tuple[str, ...]:
    if args.ftz is None and args.daz is None:
        return ("fd", "no_fd")
    ftz = bool(args.ftz)
    daz = bool(args.daz)
    return (fpenv.env_key(fpenv.FpEnvConfig(ftz=ftz, daz=daz)),)


def _cmd_run(args) -> int:
    features = hwinfo.detect_features()
    params = RunParams(
        samples=args.samples,
        warmups=args.warmups,
        min_scalar_ops=args.min_ops,
        core=None if args.core < 0 else args.core,
        shuffle=args.shuffle,
    )
    matrix = default_matrix(
        features,
        run_params=params,
        seed=args.seed,
        ops=args.ops,
        outcomes=args.classes,
        variants=args.variant,
        env_keys=_env_keys(args),
        extended=args.extended,
    )
    if not matrix.cells:
        print("nothing to measure with these filters", file=sys.stderr)
        return 1
    progress = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    results = run_matrix(matrix, features=features, progress=progress)
    if args.out:
        write_records(args.out, results)
        if not args.quiet:
            print(f"records written to {args.out}", file=sys.stderr)
    spec = RenderSpec(format=args.format, precision=args.precision,
                      value_basis=args.basis)
    print(render(results, spec), end="")
    return 0


def _cmd_compare(args) -> int:
    results = read_records(args.records)
    report = compare_to_reference(results, args.machine,
                                  tolerance=args.tolerance)
    if args.details:
        print(render_comparison(report), end="")
        print()
    print(summarize(report), end="")
    return 0


def _cmd_render(args) -> int:
    results = read_records(args.records)
    spec = RenderSpec(format=args.format, precision=args.precision,
                      value_basis=args.basis)
    print(render(results, spec), end="")
    return 0


def _cmd_dump(args) -> int:
    print(dump_kernels(ops=args.ops,
                       variants=args.variant, unroll=args.unroll), end="")
    return 0


def _cmd_env_check(args) -> int:
    print(f"executable code generation: "
          f"{'ok' if jit.host_executable() else 'UNAVAILABLE'}")
    if not jit.host_executable():
        print("verdict: unsupported host")
        return 2
    features = hwinfo.detect_features()
    print(f"cpu: {features.brand or features.vendor}")
    print(f"features: avx={features.avx} avx2={features.avx2} "
          f"fma3={features.fma3} fma4={features.fma4} "
          f"invariant_tsc={features.invariant_tsc}")
    raw = fpenv.read_raw()
    config = fpenv.FpEnvConfig.decode(raw)
    print(f"mxcsr: {raw:#06x} (ftz={config.ftz} daz={config.daz})")
    calibration = hwinfo.calibrate_tsc()
    ratio, anchor = hwinfo.core_clock_anchor()
    print(f"tsc: {calibration.tsc_hz / 1e9:.3f} GHz "
          f"(calibration spread {calibration.spread:.2%})")
    print(f"core/tsc ratio: {ratio:.3f} via {anchor} "
          f"(core near {calibration.tsc_hz * ratio / 1e9:.2f} GHz)")
    try:
        handle = hwinfo.pin_to_core(0)
        handle.restore()
        print("affinity pinning: ok")
    except FpCostError as exc:
        print(f"affinity pinning: unavailable ({exc})")
    if not features.avx:
        print("verdict: unsupported host (no AVX)")
        return 2
    print("verdict: supported")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "compare": _cmd_compare,
        "render": _cmd_render,
        "dump-kernels": _cmd_dump,
        "env-check": _cmd_env_check,
    }
    try:
        return handlers[args.command](args)
    except UnsupportedHost as exc:
        print(f"unsupported host: {exc}", file=sys.stderr)
        return 2
    except FpCostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        # unreadable or malformed record files, mostly
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
