"""Command-line front end: ``delaymargin <command> --config FILE ...``.

Exit codes: 0 analysed and stable (or command succeeded), 1 analysed and
unstable, 2 usage or config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from . import __version__
from .bldc import (LoopParams, MotorParams, PiParams, calibrate_vdc, ce_load, ce_loop,
                   ce_setpoint)
from .config import AnalysisConfig, ConfigError, load_analysis, load_sim, load_sweep
from .ddesim import BldcLoop, BracketInvalid, SimulationDiverged, export_trace, oracle_search, simulate
from .margin import (DegenerateRouthRow, DelayFreeUnstable, DelayMarginError, NonSimpleCrossing,
                     tau_max)
from .rtds import DelaySystem, QuasiPolynomial, characteristic_qp
from .tuning_rules import CALIBRATION_RULE, TUNING_TABLE, row

EXIT_STABLE = 0
EXIT_UNSTABLE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

BUILTINS = {
    # two-state example with a known exact margin
    "example": DelaySystem([[-2.0, 0.0], [0.0, -0.9]], [[-1.0, 0.0], [-1.0, -1.0]]),
    # x'(t) = -x(t - tau)
    "scalar": QuasiPolynomial([[0.0, 1.0], [1.0]]),
}


def fmt(x) -> str:
    """Six significant digits; infinities as ``inf``."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.6g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return fmt(x)
        return float(f"{x:.6g}")
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def dump_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    return buf.getvalue()


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _as_records(report: dict) -> str:
    """Flat ``key,value`` CSV of the scalar fields of ``report``."""
    rows = [[k, v] for k, v in report.items() if not isinstance(v, (list, dict))]
    return dump_csv(["key", "value"], rows)


# -- analyze ---------------------------------------------------------------

def analyze_config(cfg: AnalysisConfig) -> dict:
    m, pi, lp = cfg.motor_params(), cfg.pi_params(), cfg.loop_params()
    op = cfg.operating_point()
    depth = cfg.options.ladder_depth
    tau_total = op.tau_total(lp.tau_s)
    load = tau_max(ce_load(m, pi, lp), depth)
    sp = tau_max(ce_setpoint(m, pi, lp, tau_l=cfg.options.tau_l), depth)
    return {
        "tau_h": op.tau_h,
        "tau_total": tau_total,
        "tau_max_load": load.tau_max,
        "tau_max_setpoint": sp.tau_max,
        "critical_points": [
            {"T_cr": cp.T_cr, "omega_cr": cp.omega_cr, "tau_cr": cp.tau_cr, "root_tendency": cp.root_tendency}
            for cp in load.critical_points
        ],
        "stable": tau_total < load.tau_max,
        "margin_ratio": load.tau_max / tau_total,
    }


def cmd_analyze(args) -> int:
    cfg = load_analysis(args.config)
    try:
        report = analyze_config(cfg)
    except DelayFreeUnstable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    text = dump_json(report) if args.format == "json" else _as_records(report)
    _emit(text, args.out)
    return EXIT_STABLE if report["stable"] else EXIT_UNSTABLE


# -- sweep -----------------------------------------------------------------

def _error_code(exc: Exception) -> str:
    if isinstance(exc, DelayFreeUnstable):
        return "delay_free_unstable"
    if isinstance(exc, DegenerateRouthRow):
        return "degenerate_routh"
    if isinstance(exc, NonSimpleCrossing):
        return "non_simple_crossing"
    if isinstance(exc, ValueError):
        return "invalid_parameters"
    return "numerical"


def sweep_point(m: MotorParams, lp: LoopParams, kp: float, mult: float, omega_f: float, depth: int = 4):
    tau_iw = mult * m.tau_mech
    pi = PiParams(kp, kp / tau_iw)
    try:
        t = tau_max(ce_load(m, pi, lp.replace(tau_f=1.0 / omega_f)), depth).tau_max
        return [kp, tau_iw, omega_f, t, ""]
    except (DelayMarginError, ValueError, np.linalg.LinAlgError) as exc:
        return [kp, tau_iw, omega_f, math.nan, _error_code(exc)]


def _sweep_task(packed):
    return sweep_point(*packed)


def cmd_sweep(args) -> int:
    cfg = load_analysis(args.config)
    spec = load_sweep(args.sweep)
    m, lp = cfg.motor_params(), cfg.loop_params()
    tasks = [
        (m, lp, kp, mult, wf, cfg.options.ladder_depth)
        for wf in spec.omega_f_values
        for mult in spec.tau_iw_multipliers
        for kp in spec.kp_grid.values()
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_task, tasks, chunksize=8))
    else:
        rows = [_sweep_task(t) for t in tasks]
    header = ["kp", "tau_iw", "omega_f", "tau_max", "error"]
    if args.format == "json":
        text = dump_json([dict(zip(header, r)) for r in rows])
    else:
        text = dump_csv(header, rows)
    _emit(text, args.out)
    return EXIT_STABLE


# -- tune-table ------------------------------------------------------------

def tune_table(m: MotorParams, lp: LoopParams, calibrate: bool = True, depth: int = 4) -> tuple[float, list[dict]]:
    if calibrate:
        ref = row(CALIBRATION_RULE)
        lp = lp.replace(Vdc=calibrate_vdc(m, ref.pi(), lp, ref.tau_max_ms * 1e-3))
    rows = []
    for r in TUNING_TABLE:
        pi = r.pi()
        t = tau_max(ce_load(m, pi, lp), depth).tau_max * 1e3
        rows.append({
            "rule": r.rule,
            "objective": r.objective,
            "kp": pi.kp,
            "ki": pi.ki,
            "tau_iw_ms": pi.tau_iw * 1e3,
            "tau_max_ms": t,
            "reference_tau_max_ms": r.tau_max_ms,
            "ratio": t / r.tau_max_ms,
        })
    return lp.Vdc, rows


def cmd_tune_table(args) -> int:
    cfg = load_analysis(args.config)
    vdc, rows = tune_table(cfg.motor_params(), cfg.loop_params(), not args.no_calibrate, cfg.options.ladder_depth)
    if args.format == "json":
        text = dump_json({"Vdc": vdc, "calibrated_on": None if args.no_calibrate else CALIBRATION_RULE, "rows": rows})
    else:
        header = ["rule", "objective", "kp", "ki", "tau_iw_ms", "tau_max_ms", "reference_tau_max_ms", "ratio", "Vdc"]
        text = dump_csv(header, [[r[k] for k in header[:-1]] + [vdc] for r in rows])
    _emit(text, args.out)
    return EXIT_STABLE


# -- simulate --------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_analysis(args.config)
    spec = load_sim(args.sim)
    m, pi, lp = cfg.motor_params(), cfg.pi_params(), cfg.loop_params()
    tau_total = spec.tau_total if spec.tau_total is not None else cfg.operating_point().tau_total(lp.tau_s)
    try:
        sim_cfg = spec.build()
        trace = simulate(m, pi, lp, tau_total, sim_cfg)
    except SimulationDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    export_trace(trace, args.out or sys.stdout)
    return EXIT_STABLE


# -- validate --------------------------------------------------------------

def validate_system(system, engine_tau: float, tolerance: float, rel_tol: float = 0.01) -> dict:
    report = {"tau_max_engine": engine_tau, "tolerance": tolerance}
    if math.isinf(engine_tau):
        report.update(tau_oracle=None, relative_error=None, agree=True,
                      note="delay-independent: oracle skipped")
        return report
    try:
        res = oracle_search(system, 0.5 * engine_tau, 1.5 * engine_tau, rel_tol)
    except BracketInvalid as exc:
        report.update(tau_oracle=None, relative_error=None, agree=False, note=str(exc))
        return report
    err = abs(res.tau_star / engine_tau - 1.0)
    report.update(tau_oracle=res.tau_star, relative_error=err, agree=err <= tolerance, note="")
    return report


def cmd_validate(args) -> int:
    if args.builtin:
        system = BUILTINS[args.builtin]
        qp = system if isinstance(system, QuasiPolynomial) else characteristic_qp(system)
        engine = tau_max(qp).tau_max
        report = {"system": args.builtin, **validate_system(system, engine, 0.05)}
    else:
        if not args.config:
            raise ConfigError("validate needs --config or --builtin")
        cfg = load_analysis(args.config)
        m, pi, lp = cfg.motor_params(), cfg.pi_params(), cfg.loop_params()
        engine = tau_max(ce_loop(m, pi, lp), cfg.options.ladder_depth).tau_max
        report = {
            "system": "bldc_loop",
            **validate_system(BldcLoop(m, pi, lp), engine, cfg.options.validate_tolerance,
                              cfg.options.oracle_rel_tol),
        }
    text = dump_json(report) if args.format == "json" else _as_records(report)
    _emit(text, args.out)
    return EXIT_STABLE if report["agree"] else EXIT_UNSTABLE


# -- entry point -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaymargin", description="Delay margin analysis for PI speed loops")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True, default_format="json"):
        sp.add_argument("--config", required=config_required, help="analysis YAML file")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=default_format)

    sp = sub.add_parser("analyze", help="delay margins and stability at one operating point")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sweep", help="delay margin over a kp / tau_iw / omega_f grid")
    common(sp, default_format="csv")
    sp.add_argument("--sweep", required=True, help="sweep YAML file")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("tune-table", help="delay margin for each tuning-rule gain set")
    common(sp, default_format="csv")
    sp.add_argument("--no-calibrate", action="store_true", help="use Vdc from the config as is")
    sp.set_defaults(func=cmd_tune_table)

    sp = sub.add_parser("simulate", help="time response of the delayed loop (CSV trace)")
    common(sp, default_format="csv")
    sp.add_argument("--sim", required=True, help="simulation YAML file")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("validate", help="compare the engine with the simulation oracle")
    common(sp, config_required=False)
    sp.add_argument("--builtin", choices=sorted(BUILTINS), help="use a built-in test system")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_STABLE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DelayMarginError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
