"""Command-line interface: ``qfi3d <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
A flat JSON file given with ``--config`` supplies defaults for any option
(keys are the long option names, with ``-`` or ``_``); explicit flags win.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .beam_models import GAUSSIAN, LAGUERRE_GAUSS, BeamSpec, WindowTooSmallError
from .reports import (
    METHODS,
    THREADS_ENV,
    ConfigError,
    NumericalFailure,
    Report,
    RunConfig,
    Sweep,
    cmd_cfi_sweep,
    cmd_lg_table,
    cmd_limit_check,
    cmd_r_map,
    cmd_single_qfim,
    cmd_two_qfim,
    cmd_validate,
    render,
    thread_count,
    validation_lattice,
)
from .two_emitter import CoincidentStatesError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, method_default: str = "closed-form") -> None:
    g = p.add_argument_group("beam and grid")
    g.add_argument("--config", help="flat JSON file of option defaults")
    g.add_argument("--beam", choices=(GAUSSIAN, LAGUERRE_GAUSS), default=GAUSSIAN)
    g.add_argument("--w0", type=float, default=100e-6, help="waist radius in metres (default 100e-6)")
    g.add_argument("--lambda", dest="wavelength", type=float, default=0.5e-6,
                   help="wavelength in metres (default 0.5e-6)")
    g.add_argument("--p", type=int, default=0, help="LG radial index")
    g.add_argument("--l", type=int, default=0, help="LG azimuthal index")
    g.add_argument("--n", type=int, default=256, help="grid nodes per axis (default 256)")
    g.add_argument("--half-width", type=float, default=6.0,
                   help="grid half-width in units of w0 (default 6)")
    g.add_argument("--method", choices=METHODS, default=method_default)
    o = p.add_argument_group("output")
    o.add_argument("--output", "-o", help="output file (default: stdout)")
    o.add_argument("--format", dest="fmt", choices=("csv", "json"), default=None,
                   help="output format (default: json for reports, csv for tables)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qfi3d", description="Quantum Fisher information for 3D emitter localisation.")
    parser.add_argument("--version", action="version", version=f"qfi3d {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    p = sub.add_parser("single-qfim", help="3x3 localisation QFIm of one emitter")
    _common(p)

    p = sub.add_parser("cfi-sweep", help="direct-detection CFI against detector position")
    _common(p)
    p.add_argument("--z-min", type=float, default=-3.0, help="in units of z_r")
    p.add_argument("--z-max", type=float, default=3.0, help="in units of z_r")
    p.add_argument("--z-steps", type=int, default=301)
    p.add_argument("--no-numeric", action="store_true", help="skip the grid-quadrature columns")

    p = sub.add_parser("lg-table", help="transverse QFI of LG modes over the Gaussian")
    _common(p)
    p.add_argument("--p-max", type=int, default=3)
    p.add_argument("--l-max", type=int, default=3)

    p = sub.add_parser("two-qfim", help="Q, Gamma and R for two incoherent emitters")
    _common(p)
    p.add_argument("--x0", type=float, default=0.0, help="centroid, units of w0")
    p.add_argument("--s", type=float, default=1.0, help="transverse separation, units of w0")
    p.add_argument("--z0", type=float, default=0.0, help="axial centroid, units of z_r")
    p.add_argument("--t", type=float, default=1.0, help="axial separation, units of z_r")
    p.add_argument("--q", type=float, default=0.5, help="relative intensity, 0 < q < 1")

    p = sub.add_parser("r-map", help="compatibility indicator over an (s, t) grid")
    _common(p)
    p.add_argument("--s-min", type=float, default=0.0, help="units of w0")
    p.add_argument("--s-max", type=float, default=2.0, help="units of w0")
    p.add_argument("--s-steps", type=int, default=50)
    p.add_argument("--t-min", type=float, default=0.0, help="units of z_r")
    p.add_argument("--t-max", type=float, default=2.0, help="units of z_r")
    p.add_argument("--t-steps", type=int, default=50)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--fix-q", action="store_true", help="treat q as known (4 parameters)")

    p = sub.add_parser("limit-check", help="compare near-coincident Q with its s, t -> 0 limit")
    _common(p)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--eps", type=float, default=1e-5, help="s/w0 = t/z_r = eps")

    p = sub.add_parser("validate", help="agreement of the closed-form, subspace and oracle routes")
    _common(p, method_default="closed-form")
    p.add_argument("--s-values", type=_float_list, default=None, help="units of w0, comma separated")
    p.add_argument("--t-values", type=_float_list, default=None, help="units of z_r, comma separated")
    p.add_argument("--q-values", type=_float_list, default=None)
    p.add_argument("--rtol", type=float, default=1e-4)
    return parser


TABLE_COMMANDS = {"cfi-sweep", "lg-table", "r-map", "validate"}


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def load_config(path: str, sub: argparse.ArgumentParser) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat JSON object")
    known = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                known[opt[2:].replace("-", "_")] = action
    out = {}
    for key, value in raw.items():
        name = key.replace("-", "_")
        if name == "config":
            continue
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, (dict, list)) and not name.endswith("_values"):
            raise ConfigError(f"config value for {key!r} must be a scalar")
        action = known[name]
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"config value for {key!r} must be one of {list(action.choices)}")
        try:
            if isinstance(value, list):
                value = [float(v) for v in value]
            elif action.type is _float_list:
                value = _float_list(str(value))
            elif action.type is not None:
                if isinstance(value, bool):
                    raise TypeError
                value = action.type(value)
        except (TypeError, ValueError, argparse.ArgumentTypeError):
            raise ConfigError(f"bad value for {key!r}: {value!r}") from None
        out[action.dest] = value
    return out


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = _subparser(parser, args.command)
        sub.set_defaults(**load_config(args.config, sub))
        args = parser.parse_args(argv)
    return args


def config_from_args(args: argparse.Namespace) -> RunConfig:
    try:
        if args.beam == GAUSSIAN:
            if args.p or args.l:
                raise ConfigError("--p/--l need --beam lg")
            spec = BeamSpec.gaussian(args.w0, args.wavelength)
        else:
            spec = BeamSpec.laguerre_gauss(args.w0, args.wavelength, args.p, args.l)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sweep = {}
    if args.command == "cfi-sweep":
        sweep["z"] = Sweep(args.z_min, args.z_max, args.z_steps)
    elif args.command == "r-map":
        sweep["s"] = Sweep(args.s_min, args.s_max, args.s_steps)
        sweep["t"] = Sweep(args.t_min, args.t_max, args.t_steps)
    fmt = args.fmt or ("csv" if args.command in TABLE_COMMANDS else "json")
    return RunConfig(spec, args.n, args.half_width, args.method, sweep, args.output, fmt)


def run(args: argparse.Namespace, cfg: RunConfig) -> Report:
    c = args.command
    if c == "single-qfim":
        return cmd_single_qfim(cfg)
    if c == "cfi-sweep":
        return cmd_cfi_sweep(cfg, numeric=not args.no_numeric)
    if c == "lg-table":
        if args.p_max < 0 or args.l_max < 0:
            raise ConfigError("--p-max and --l-max must be >= 0")
        return cmd_lg_table(cfg, args.p_max, args.l_max)
    if c == "two-qfim":
        return cmd_two_qfim(cfg, args.x0, args.s, args.z0, args.t, args.q)
    if c == "r-map":
        return cmd_r_map(cfg, args.q, args.fix_q)
    if c == "limit-check":
        return cmd_limit_check(cfg, args.q, args.eps)
    if c == "validate":
        kw = {k: getattr(args, f"{k}_values") for k in ("s", "t", "q")}
        kw = {f"{k}_values": v for k, v in kw.items() if v is not None}
        return cmd_validate(cfg, validation_lattice(**kw), args.rtol)
    raise ConfigError(f"unknown command {c!r}")


def _write(cfg: RunConfig, report: Report, args: argparse.Namespace, argv: Sequence[str]) -> None:
    text = render(report, cfg.fmt)
    if cfg.output is None:
        sys.stdout.write(text)
        return
    with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    meta = {
        "schema": report.schema,
        "command": args.command,
        "argv": list(argv),
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "threads": thread_count(),
        "ok": report.ok,
        "summary": report.summary,
    }
    with open(cfg.output + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        cfg = config_from_args(args)
        thread_count()
    except (UsageError, ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run(args, cfg)
    except ConfigError as exc:
        print(f"qfi3d: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, CoincidentStatesError, WindowTooSmallError, FloatingPointError,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"qfi3d: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        _write(cfg, report, args, argv)
    except OSError as exc:
        print(f"qfi3d: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not report.ok:
        print(f"qfi3d: {args.command}: numerical checks failed", file=sys.stderr)
        if report.summary:
            print(json.dumps(report.summary), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = [
    "EXIT_NUMERIC",
    "EXIT_OK",
    "EXIT_USAGE",
    "THREADS_ENV",
    "build_parser",
    "config_from_args",
    "main",
    "parse_args",
]
