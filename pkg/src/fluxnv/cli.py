"""Command-line entry point: ``fluxnv <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error. Failures print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone

import numpy as np

from . import dynamics, inference, io, spectroscopy
from .config import load_config, parse_overrides
from .errors import ConfigError, FluxNVError, NoAvoidedCrossingError

logger = logging.getLogger("fluxnv")


def _common(parser):
    parser.add_argument("--config", default="default", help="YAML config path, or 'default'")
    parser.add_argument("--out", help="write the result here")
    parser.add_argument("--format", choices=sorted(io.WRITERS), default="csv")
    parser.add_argument("--grid", action="append", default=[], metavar="KEY=VALUE", help="config override, e.g. t_max_ns=50 or ensemble.n_spins=1e7")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None, help="seed for noise injection")
    parser.add_argument("--timestamp", action="store_true", help="record wall-clock time in JSON provenance")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fluxnv", description="Flux qubit / NV ensemble simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="flux-bias spectrum and vacuum Rabi splitting")
    p.add_argument("--model", choices=["collective", "exact"], default="collective")
    p.add_argument("--n-exact", type=int, default=None)

    p = sub.add_parser("rabi", help="resonant vacuum Rabi trace")
    p.add_argument("--t-max", type=float, default=None, help="hold time in ns")
    p.add_argument("--detuning", type=float, default=0.0, help="GHz from the bright line")
    p.add_argument("--coherent", action="store_true", help="switch off all dissipation")

    p = sub.add_parser("chevron", help="vacuum Rabi traces versus detuning")
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--coherent", action="store_true")

    p = sub.add_parser("fit-rabi", help="fit a damped cosine to a trace")
    p.add_argument("--input", help="trace file (JSON envelope or CSV); simulated from config if omitted")
    p.add_argument("--column", default="p_qubit_excited")
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--noise", type=float, default=0.0, help="add uniform noise of this amplitude")

    p = sub.add_parser("estimate-n", help="ensemble size from the splitting and from the NV density")
    p.add_argument("--g-ens-ghz", type=float, default=inference.MEASURED_G_ENS)

    p = sub.add_parser("calibrate-gamma", help="bright-mode dephasing for a target decay time")
    p.add_argument("--target-ns", type=float, default=20.0)

    sub.add_parser("report", help="cross-check spectroscopy, dynamics and density estimates")

    for name, sp in sub.choices.items():
        _common(sp)
    return ap


def _config(args):
    cfg = load_config(args.config)
    overrides = parse_overrides(args.grid)
    if overrides:
        cfg = cfg.override(overrides)
        logger.info("config after overrides: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    return cfg


def _summary(**values):
    for k, v in values.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        print(f"{k}={v}")


def cmd_spectrum(args, cfg):
    s = spectroscopy.sweep_spectrum(cfg, model=args.model, n_exact=args.n_exact, threads=args.threads)
    try:
        gap, bias = spectroscopy.extract_splitting(s)
        _summary(gap_ghz=gap, bias_mphi0=bias)
    except NoAvoidedCrossingError as exc:
        _summary(gap_ghz="none", reason=str(exc))
    return "spectrum", s


def cmd_rabi(args, cfg):
    diss = dynamics.DissipationSpec.none() if args.coherent else None
    tr = dynamics.vacuum_rabi_trace(cfg, t_max=args.t_max, detuning=args.detuning, dissipation=diss)
    _summary(samples=len(tr.times), t_max_ns=float(tr.times[-1]), final_p_excited=float(tr.p_excited[-1]))
    return "time_trace", tr


def cmd_chevron(args, cfg):
    diss = dynamics.DissipationSpec.none() if args.coherent else None
    grid = dynamics.chevron_scan(cfg, t_max=args.t_max, dissipation=diss, threads=args.threads)
    _summary(detunings=len(grid.detunings), times=len(grid.times))
    return "chevron", grid


def _load_trace(path):
    if path.lower().endswith(".csv"):
        return io.read_trace_csv(path)
    env = io.read_json(path)
    if env.kind != "time_trace":
        raise ConfigError(f"{path} holds a {env.kind!r} result, not a time trace")
    return dynamics.TimeTrace.from_dict(env.payload)


def cmd_fit_rabi(args, cfg):
    tr = _load_trace(args.input) if args.input else dynamics.vacuum_rabi_trace(cfg, t_max=args.t_max)
    y = np.asarray(tr.columns()[args.column], dtype=float)
    if args.noise > 0:
        rng = np.random.default_rng(args.seed)
        y = y + rng.uniform(-args.noise, args.noise, y.size)
    fit = inference.fit_damped_cosine(tr.times, y)
    _summary(frequency_ghz=fit.frequency, tau_ns=fit.tau, amplitude=fit.amplitude, offset=fit.offset, residual_rms=fit.residual_rms)
    return "fit", fit


def cmd_estimate_n(args, cfg):
    ep, s = cfg.ensemble_params(), cfg.sample
    n_formula = inference.estimate_ensemble_size(args.g_ens_ghz, ep.g_single)
    n_density = inference.density_cross_check(s.density_cm3, s.area_um2, s.thickness_um)
    disc = inference.relative_discrepancy(n_density, n_formula)
    _summary(n_from_splitting=n_formula, n_from_density=n_density, discrepancy=disc)
    return "estimate", {
        "g_ens_ghz": args.g_ens_ghz,
        "g_single_ghz": ep.g_single,
        "n_from_splitting": n_formula,
        "n_from_density": n_density,
        "discrepancy": disc,
    }


def cmd_calibrate_gamma(args, cfg):
    cal = dynamics.calibrate_gamma(args.target_ns, cfg)
    _summary(gamma_ens_ghz=cal.gamma_ens, fitted_decay_ns=cal.fitted_decay, evaluations=cal.evaluations)
    if cal.note:
        _summary(note=cal.note)
    return "calibration", {
        "gamma_ens_ghz": cal.gamma_ens,
        "fitted_decay_ns": cal.fitted_decay,
        "target_decay_ns": cal.target_decay,
        "evaluations": cal.evaluations,
        "note": cal.note,
    }


def cmd_report(args, cfg):
    try:
        gap, _ = spectroscopy.extract_splitting(spectroscopy.sweep_spectrum(cfg, threads=args.threads))
    except NoAvoidedCrossingError:
        gap = None
    coherent = damped = None
    if gap is not None:
        coherent = inference.fit_time_trace(dynamics.vacuum_rabi_trace(cfg, dissipation=dynamics.DissipationSpec.none()))
        damped = inference.fit_time_trace(dynamics.vacuum_rabi_trace(cfg))
    rep = inference.consistency_report(gap, coherent, cfg, damped_fit=damped)
    for k, v in rep.to_dict().items():
        if k != "notes":
            _summary(**{k: v})
    for note in rep.notes:
        _summary(note=note)
    return "report", rep


COMMANDS = {
    "spectrum": cmd_spectrum,
    "rabi": cmd_rabi,
    "chevron": cmd_chevron,
    "fit-rabi": cmd_fit_rabi,
    "estimate-n": cmd_estimate_n,
    "calibrate-gamma": cmd_calibrate_gamma,
    "report": cmd_report,
}


def _fail(exc, code):
    print(json.dumps({"error": type(exc).__name__, "code": code, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.WARNING if args.quiet else logging.INFO)
    logger.propagate = False
    try:
        cfg = _config(args)
        kind, result = COMMANDS[args.command](args, cfg)
        if args.out:
            created = datetime.now(timezone.utc).isoformat() if args.timestamp else None
            env = io.envelope(kind, result, cfg, seed=args.seed, created=created)
            io.emit(env, args.format, args.out)
            logger.info("wrote %s (%s)", args.out, args.format)
    except FluxNVError as exc:
        return _fail(exc, exc.exit_code)
    except ValueError as exc:
        return _fail(exc, ConfigError.exit_code)
    except OSError as exc:
        return _fail(exc, 4)
    return 0


if __name__ == "__main__":
    sys.exit(main())
