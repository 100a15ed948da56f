"""Command-line front end.

Angles on the command line are in degrees; everything else is SI.
Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import budget, chsh, multipair, report, scenarios, simulate, tomography
from .params import (FIELD_NAMES, AnalyzerPair, NumericalError, PairDistribution, SourceParams, ValidationError,
                     parse_config)
from .states import werner

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", type=Path, help="key = value parameter file")
    g.add_argument("--seed", type=int, default=None, help="master RNG seed (u64); default 0, or the preset's own seed")
    g.add_argument("--out", default=None, help="output file (scenario: directory); default stdout")
    g.add_argument("--pulses", type=int, default=None, help="pulses per run / setting / point")
    g.add_argument("--workers", type=int, default=1, help="concurrent simulation shards")
    s = p.add_argument_group("source parameters (override --config)")
    for name in FIELD_NAMES:
        kind = str if name == "pair_distribution" else float
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    s.add_argument("--eta", type=float, default=None, help="set both arm efficiencies")
    s.add_argument("--dark-rate", type=float, default=None, help="set both dark rates")
    return p


def _resolve_params(args):
    overrides = {name: getattr(args, name) for name in FIELD_NAMES}
    if args.eta is not None:
        overrides["eta_signal"] = overrides["eta_signal"] if overrides["eta_signal"] is not None else args.eta
        overrides["eta_idler"] = overrides["eta_idler"] if overrides["eta_idler"] is not None else args.eta
    if args.dark_rate is not None:
        for k in ("dark_rate_signal", "dark_rate_idler"):
            overrides[k] = overrides[k] if overrides[k] is not None else args.dark_rate
    if overrides["pair_distribution"] is not None:
        overrides["pair_distribution"] = PairDistribution.parse(overrides["pair_distribution"])
    return parse_config(args.config, overrides)


def _canonical_argv(args, params, extra: list[str]) -> list[str]:
    """A command line that reproduces this run without the config file."""
    argv = [args.command, *extra, "--seed", str(args.seed)]
    if args.pulses is not None:
        argv += ["--pulses", str(args.pulses)]
    for key, value in params.as_items():
        argv += ["--" + key.replace("_", "-"), value]
    return argv


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spdcsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()

    p = sub.add_parser("model-curve", parents=[common], help="closed-form visibility vs alpha")
    p.add_argument("--alpha-min", type=float, default=0.0)
    p.add_argument("--alpha-max", type=float, default=0.7)
    p.add_argument("--steps", type=int, default=71)

    p = sub.add_parser("simulate", parents=[common], help="pulse-level Monte Carlo, counts per block")
    p.add_argument("--theta-s", type=float, default=0.0, help="signal analyzer angle (deg)")
    p.add_argument("--theta-i", type=float, default=90.0, help="idler analyzer angle (deg)")
    p.add_argument("--block-size", type=int, default=simulate.BLOCK_SIZE)

    p = sub.add_parser("fringe", parents=[common], help="coincidences vs idler analyzer angle")
    p.add_argument("--theta-s", type=float, default=0.0)
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=162.0)
    p.add_argument("--theta-step", type=float, default=18.0)
    p.add_argument("--repeats", type=int, default=30)

    p = sub.add_parser("chsh", parents=[common], help="CHSH S parameter")
    p.add_argument("--werner-p", type=float, default=None, help="exact mode for a Werner state")
    p.add_argument("--coincidences", type=float, default=None,
                   help="with --werner-p: Poisson-sample this many expected coincidences per setting")

    p = sub.add_parser("tomo", parents=[common], help="state tomography reconstruction")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help="CSV rows: setting label, count")
    src.add_argument("--simulate", action="store_true", help="simulate the 16 settings")
    p.add_argument("--werner-p", type=float, default=None,
                   help="with --simulate: draw counts from this Werner state instead of the pulse simulator")
    p.add_argument("--coincidences", type=float, default=1000.0,
                   help="with --werner-p: counts per setting (exact unless a seed-driven --sample is given)")
    p.add_argument("--sample", action="store_true", help="with --werner-p: Poisson-sample the counts")
    p.add_argument("--method", choices=("least_squares", "likelihood"), default="least_squares")
    p.add_argument("--subtract-accidentals", action="store_true")

    p = sub.add_parser("budget", parents=[common], help="accidental-coincidence budget")
    p.add_argument("--v-target", type=float, default=0.99)

    p = sub.add_parser("scenario", parents=[common], help="run a named preset")
    p.add_argument("name", choices=scenarios.PRESETS)
    return parser


def _cmd_model_curve(args, params):
    if args.steps < 1:
        raise ValidationError("--steps must be >= 1")
    alphas = np.linspace(args.alpha_min, args.alpha_max, args.steps)
    rows = multipair.model_curve(alphas, params.eta, params.pair_distribution)
    argv = _canonical_argv(args, params, ["--alpha-min", repr(args.alpha_min), "--alpha-max",
                                          repr(args.alpha_max), "--steps", str(args.steps)])
    return report.render(["alpha", "c_min", "c_max", "visibility", "visibility_first_order"], rows,
                         argv=argv, params=params)


def _cmd_simulate(args, params):
    pulses = args.pulses or scenarios.SECOND
    pair = AnalyzerPair(math.radians(args.theta_s), math.radians(args.theta_i))
    blocks = simulate.simulate_blocks(params, pair, pulses, args.seed, block_size=args.block_size,
                                      workers=args.workers)
    rows = [(b, r.singles_s, r.singles_i, r.coincidences) for b, r in enumerate(blocks)]
    total = simulate.merge(blocks)
    argv = _canonical_argv(args, params, ["--theta-s", repr(args.theta_s), "--theta-i", repr(args.theta_i),
                                          "--block-size", str(args.block_size)])
    notes = [f"pulses: {pulses}", f"block_size: {args.block_size}",
             f"total: singles_s={total.singles_s} singles_i={total.singles_i} coincidences={total.coincidences}"]
    return report.render(["pulse_block", "singles_s", "singles_i", "coincidences"], rows, argv=argv,
                         params=params, seed=args.seed, notes=notes)


def _cmd_fringe(args, params):
    pulses = args.pulses or scenarios.SECOND
    if args.theta_step <= 0:
        raise ValidationError("--theta-step must be positive")
    grid_deg = np.arange(args.theta_min, args.theta_max + 1e-9, args.theta_step)
    points = simulate.fringe_scan(params, math.radians(args.theta_s), np.radians(grid_deg), pulses,
                                  args.repeats, seed=args.seed, workers=args.workers)
    rows = [(d, p.mean, p.std) for d, p in zip(grid_deg, points)]
    notes = [f"pulses_per_point: {pulses}", f"repeats: {args.repeats}"]
    if len(points) >= 5 and np.ptp(grid_deg) >= 90:
        errs = [p.std / math.sqrt(args.repeats) for p in points]
        fit = scenarios.fit_sinusoid([p.theta_i for p in points], [p.mean for p in points], errs)
        notes.append(f"fit: visibility={fit.visibility!r} visibility_err={fit.visibility_err!r} "
                     f"c_max={fit.c_max!r} c_min={fit.c_min!r} phase_deg={math.degrees(fit.phase)!r}")
    argv = _canonical_argv(args, params, [
        "--theta-s", repr(args.theta_s), "--theta-min", repr(args.theta_min), "--theta-max",
        repr(args.theta_max), "--theta-step", repr(args.theta_step), "--repeats", str(args.repeats)])
    return report.render(["theta_i_deg", "mean_coinc", "std_coinc"], rows, argv=argv, params=params,
                         seed=args.seed, notes=notes)


def _cmd_chsh(args, params):
    if args.werner_p is not None:
        state = werner(args.werner_p)
        extra = ["--werner-p", repr(args.werner_p)]
        if args.coincidences:
            counts = chsh.sample_counts(state, args.coincidences, args.seed)
            extra += ["--coincidences", repr(args.coincidences)]
            mode = f"sampled Werner state, {args.coincidences:g} expected coincidences per setting"
        else:
            mode = "exact (probabilities)"
        result = chsh.s_from_counts(counts) if args.coincidences else chsh.exact_result(state)
        argv = [args.command, *extra, "--seed", str(args.seed)]
        return scenarios.chsh_text(result, argv=argv, seed=args.seed, notes=[f"mode: {mode}"])
    pulses = args.pulses or scenarios.SECOND
    counts = chsh.simulated_counts(params, pulses, args.seed, workers=args.workers)
    result = chsh.s_from_counts(counts)
    return scenarios.chsh_text(result, argv=_canonical_argv(args, params, []), params=params, seed=args.seed,
                               notes=[f"mode: simulated, {pulses} pulses per setting"])


def _read_counts(path: Path) -> np.ndarray:
    if not path.is_file():
        raise ValidationError(f"input file not found: {path}")
    labels = [s.label for s in tomography.standard_settings()]
    found: dict[str, float] = {}
    with path.open() as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row[0].strip().lower() in ("setting", "label"):
                continue
            if len(row) < 2:
                raise ValidationError(f"{path}:{lineno}: expected 'setting,count'")
            label = row[0].strip().upper()
            if label not in labels:
                raise ValidationError(f"{path}:{lineno}: unknown setting {row[0]!r}")
            try:
                found[label] = float(row[1])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: malformed count {row[1]!r}") from None
    missing = [lab for lab in labels if lab not in found]
    if missing:
        raise ValidationError(f"{path}: missing settings {', '.join(missing)}")
    return np.array([found[lab] for lab in labels])


def _cmd_tomo(args, params):
    settings = tomography.standard_settings()
    if args.input is not None:
        counts = _read_counts(args.input)
        header = dict(argv=[args.command, "--input", str(args.input), "--method", args.method])
        notes = []
    elif args.werner_p is not None:
        seed = args.seed if args.sample else None
        counts = tomography.forward_counts(werner(args.werner_p), settings, args.coincidences, seed)
        extra = ["--simulate", "--werner-p", repr(args.werner_p), "--coincidences", repr(args.coincidences),
                 "--method", args.method] + (["--sample"] if args.sample else [])
        header = dict(argv=[args.command, *extra, "--seed", str(args.seed)], seed=args.seed)
        notes = []
    else:
        pulses = args.pulses or scenarios.FRINGE_REPEATS * scenarios.SECOND
        counts = scenarios.simulated_tomo_counts(params, pulses, args.seed, args.workers,
                                                 args.subtract_accidentals)
        extra = ["--simulate", "--method", args.method] + (["--subtract-accidentals"] if args.subtract_accidentals else [])
        header = dict(argv=_canonical_argv(args, params, extra), params=params, seed=args.seed)
        notes = [f"pulses_per_setting: {pulses}"]
    result = tomography.reconstruct(counts, settings, method=args.method)
    notes.append("counts: " + " ".join(f"{s.label}={c:g}" for s, c in zip(settings, counts)))
    return scenarios.tomo_text(result, notes=notes, **header)


def _cmd_budget(args, params):
    rep = budget.accidental_budget(params, args.v_target)
    row = rep.as_row()
    argv = _canonical_argv(args, params, ["--v-target", repr(args.v_target)])
    return report.render(list(row), [row], argv=argv, params=params)


COMMANDS = {
    "model-curve": _cmd_model_curve,
    "simulate": _cmd_simulate,
    "fringe": _cmd_fringe,
    "chsh": _cmd_chsh,
    "tomo": _cmd_tomo,
    "budget": _cmd_budget,
}


def run(argv: list[str]) -> None:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        raise ValidationError("--workers must be >= 1")
    if args.pulses is not None and args.pulses < 1:
        raise ValidationError("--pulses must be >= 1")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ValidationError("--seed must be an unsigned 64-bit integer")
    if args.command == "scenario":
        base = _resolve_params(args)
        if args.seed is None:
            args.seed = scenarios.DEFAULT_SEEDS[args.name]
        if args.out is None:
            raise UsageError("scenario needs --out DIR")
        canonical = ["scenario", args.name, "--seed", str(args.seed)] + (
            ["--pulses", str(args.pulses)] if args.pulses else [])
        # base settings that differ from the defaults, so the header alone reproduces the run
        defaults = dict(SourceParams().as_items())
        for key, value in base.as_items():
            if defaults[key] != value:
                canonical += ["--" + key.replace("_", "-"), value]
        files = scenarios.run_scenario(args.name, args.out, seed=args.seed, pulses=args.pulses, base=base,
                                       workers=args.workers, argv=canonical)
        for path in files.values():
            print(path, file=sys.stderr)
        return
    if args.seed is None:
        args.seed = 0
    params = _resolve_params(args)
    report.write(COMMANDS[args.command](args, params), args.out)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        run(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"spdcsim: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"spdcsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"spdcsim: cannot write output: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK
