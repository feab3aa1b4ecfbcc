"""Command-line interface: run, validate, waveform."""

import argparse
import sys

from .config import ConfigError, parse_config
from .fem.solver import NonConvergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="valvefsi",
        description="Reduced FSI solver for aortic-valve opening "
                    "(RIIS Navier-Stokes + lumped valve model)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation")
    run.add_argument("--config", required=True, help="YAML configuration file")
    run.add_argument("--output", default=None, help="output directory")
    run.add_argument("--ugamma", choices=("model", "zero", "phidiff"),
                     default=None, help="surface-velocity mode override")
    run.add_argument("--force-model", choices=("full", "pressure"), default=None,
                     help="valve force model override")
    run.add_argument("--snapshots", type=int, default=None,
                     help="write a VTK snapshot every N steps")
    run.add_argument("--resume", default=None, help="checkpoint file to resume from")

    val = sub.add_parser("validate", help="validate a configuration file")
    val.add_argument("--config", required=True)

    wf = sub.add_parser("waveform", help="dump the builtin pressure waveforms")
    wf.add_argument("--emit", required=True, metavar="CSV",
                    help="output CSV path (header t,p_in,p_out; SI units)")
    wf.add_argument("--t-end", type=float, default=0.4)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "waveform":
        from .waveforms import builtin_waveforms, write_waveform_csv

        p_in, p_out = builtin_waveforms(t_end=args.t_end)
        write_waveform_csv(args.emit, p_in, p_out)
        print(f"wrote builtin waveforms to {args.emit}")
        return EXIT_OK

    try:
        config = parse_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"{args.config}: valid")
        return EXIT_OK

    if args.ugamma is not None:
        config.ugamma_mode = args.ugamma
    if args.force_model is not None:
        config.valve["force_model"] = (
            "full_stress" if args.force_model == "full" else "pressure_only"
        )
    if args.snapshots is not None:
        config.output["snapshot_every"] = args.snapshots

    from .driver import run_simulation

    try:
        report = run_simulation(config, output_dir=args.output,
                                resume_from=args.resume)
    except NonConvergenceError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"completed {report.steps} steps; "
          f"0D phase fraction {report.phase_fraction('ode0d'):.2%}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
