"""Command-line front end: scans, sweeps, oracle validation and fits.

Every command that writes a CSV also writes ``<output>.json`` with the
resolved scenario, its hash, the package version and the approximation
flags. The CSV bodies are deterministic.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import FitError, extract_beam_angles, fit_cross_section, fit_fringe_model
from .grating import grating_strength, talbot_coefficients
from .interferometer import (
    CsvFormatError, curve_to_csv, fringe_period, read_curve_csv, resonance_scan, signal_coefficients,
    normalized_signal, visibility,
)
from .oracle import McSpec, GridSpec, ResolutionError, classical_mc_scan, compare, quantum_wave_scan
from .scenario import (
    Scenario, ScenarioError, dump_scenario, load_scenario, scenario_hash, scenario_to_dict, with_parameter,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_FIT = 4

METRICS = ("visibility", "S_N_at_resonance", "fringe_period")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _parse_value(text: str):
    text = text.strip()
    if text.lower() in ("none", "null"):
        return None
    try:
        return float(text)
    except ValueError:
        return text


def _apply_overrides(scen: Scenario, items) -> Scenario:
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects path=value, got {item!r}")
        path, value = item.split("=", 1)
        scen = with_parameter(scen, path, _parse_value(value))
    return scen


def _load(args) -> Scenario:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scen = load_scenario(args.scenario)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return _apply_overrides(scen, getattr(args, "set", None))


def _metadata(scen: Scenario | None, command: str, extra: dict | None = None) -> dict:
    meta = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if scen is not None:
        meta["scenario_hash"] = scenario_hash(scen)
        meta["scenario"] = scenario_to_dict(scen)
    meta.update(extra or {})
    return meta


def _write(output: str | None, body: str, meta: dict | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(body)
        return
    Path(output).write_text(body)
    if meta is not None:
        Path(output + ".json").write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def _models(name: str) -> list[str]:
    return ["quantum", "classical"] if name == "both" else [name]


# --------------------------------------------------------------------------
# scan
# --------------------------------------------------------------------------

def cmd_scan(args) -> int:
    scen = _load(args)
    curves = {}
    for model in _models(args.model):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            curves[model] = resonance_scan(scen.with_model(model), first_grating=args.first_grating)
    body = curve_to_csv(curves if len(curves) > 1 else next(iter(curves.values())))
    meta = _metadata(scen, "scan", {"curves": {m: c.meta for m, c in curves.items()}})
    _write(args.output, body, meta)
    return EXIT_OK


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

def sweep_metric(scen: Scenario, metric: str) -> float:
    if metric == "visibility":
        vis = visibility(scen)
        return vis.sign * vis.sinusoidal
    if metric == "S_N_at_resonance":
        return normalized_signal(scen, 0.0)
    if metric == "fringe_period":
        return fringe_period(scen.beam, scen.period)
    raise UsageError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")


def _sweep_point(job):
    scen, path, value, metric, model = job
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = with_parameter(scen, path, value).with_model(model)
        return value, model, sweep_metric(s, metric)


def sweep_values(args) -> list[float]:
    if args.values:
        return [float(v) for v in args.values.split(",") if v.strip()]
    if args.grid:
        start, stop, count = args.grid
        count = int(count)
        if count < 1:
            raise UsageError("grid count must be >= 1")
        if args.log:
            if start <= 0 or stop <= 0:
                raise UsageError("log grid needs positive bounds")
            return np.geomspace(start, stop, count).tolist()
        return np.linspace(start, stop, count).tolist()
    raise UsageError("give --values or --grid")


def run_sweep(scen: Scenario, path: str, values, metric: str, models, jobs: int = 1) -> list[tuple]:
    """(value, model, metric) rows sorted by value then model."""
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    with_parameter(scen, path, values[0])  # fail early on a bad path
    work = [(scen, path, v, metric, m) for v in values for m in models]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, work))
    else:
        rows = [_sweep_point(w) for w in work]
    return sorted(rows, key=lambda r: (r[0], r[1]))


def cmd_sweep(args) -> int:
    scen = _load(args)
    values = sweep_values(args)
    jobs = args.jobs or os.cpu_count() or 1
    rows = run_sweep(scen, args.parameter, values, args.metric, _models(args.model), jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parameter", "value", "model", args.metric])
    for value, model, metric in rows:
        w.writerow([args.parameter, f"{value:.12g}", model, f"{metric:.12g}"])
    _write(args.output, buf.getvalue(), _metadata(scen, "sweep", {"parameter": args.parameter}))
    return EXIT_OK


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------

def cmd_validate(args) -> int:
    scen = _load(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if args.oracle == "wave":
            tol = 1e-3 if args.tolerance is None else args.tolerance
            grid = GridSpec(periods=args.periods, points_per_period=args.points)
            analytic = resonance_scan(_apply_overrides(scen, args.analytic_set).with_model("quantum"))
            try:
                oracle = quantum_wave_scan(scen, grid=grid, check=not args.no_refine, tolerance=tol)
            except ResolutionError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_VALIDATION
            report = compare(analytic, oracle, tol).__dict__
            passed = report["passed"]
        else:
            tol = 3.0 if args.tolerance is None else args.tolerance
            analytic = resonance_scan(_apply_overrides(scen, args.analytic_set).with_model("classical"))
            oracle = classical_mc_scan(scen.with_model("classical"), mc=McSpec(args.particles, args.seed))
            z = np.abs(analytic.s_n - oracle.s_n) / np.where(oracle.sigma > 0, oracle.sigma, np.inf)
            i = int(np.argmax(z))
            passed = bool(z[i] <= tol)
            report = {"max_z": float(z[i]), "worst_tau": float(analytic.tau[i]), "tolerance_sigma": tol,
                      "passed": passed, "z": z.tolist()}
    report.update(oracle=args.oracle, scenario_hash=scenario_hash(scen))
    text = json.dumps(report, indent=2, default=_json_default) + "\n"
    _write(args.output, text, None)
    return EXIT_OK if passed else EXIT_VALIDATION


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------

def read_fluence_csv(path: str):
    """Columns fluence_per_cm2, counts and optionally sigma; fluence returned per m^2."""
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    header = [c.strip() for c in rows[0]] if rows else []
    if header[:2] != ["fluence_per_cm2", "counts"]:
        raise CsvFormatError("line 1: expected header fluence_per_cm2,counts[,sigma]")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 2:
            raise CsvFormatError(f"line {lineno}: expected at least 2 columns")
        try:
            data.append([float(c) for c in row[:len(header)]])
        except ValueError:
            raise CsvFormatError(f"line {lineno}: non-numeric value in {row!r}") from None
    if not data:
        raise CsvFormatError("no data rows")
    arr = np.array(data)
    sigma = arr[:, 2] if arr.shape[1] > 2 else None
    return arr[:, 0] * 1e4, arr[:, 1], sigma


def cmd_fit(args) -> int:
    try:
        if args.kind == "fringe":
            curve = read_curve_csv(Path(args.data), model=args.model)
            tau_off = None if args.tau_off_ns is None else args.tau_off_ns * 1e-9
            fit = fit_fringe_model(curve, tau_off=tau_off, free_phase=args.free_phase)
            result = {"kind": "fringe", **fit.to_dict()}
            if args.extract:
                if args.scenario:
                    scen = _load(args)
                    d, v = scen.period, scen.beam.speed
                elif args.period_nm and args.speed:
                    d, v = args.period_nm * 1e-9, args.speed
                else:
                    raise UsageError("--extract needs --scenario or both --period-nm and --speed")
                ang = extract_beam_angles(fit, d, v)
                result.update(divergence=ang.divergence, divergence_error=ang.divergence_error,
                              tilt=ang.tilt, tilt_error=ang.tilt_error)
        else:
            phi, counts, sigma = read_fluence_csv(args.data)
            fit = fit_cross_section(phi, counts, sigma)
            result = {"kind": "cross-section", **fit.to_dict(),
                      "sigma_PI_cm2": fit.sigma_PI * 1e4, "sigma_PI_error_cm2": fit.sigma_PI_error * 1e4}
    except FitError as exc:
        print(f"fit failed: {exc}; diagnostics {exc.diagnostics}", file=sys.stderr)
        return EXIT_FIT
    _write(args.output, json.dumps(result, indent=2, default=_json_default) + "\n", None)
    return EXIT_OK


# --------------------------------------------------------------------------
# dump-coefficients
# --------------------------------------------------------------------------

def cmd_dump_coefficients(args) -> int:
    scen = _load(args)
    tau = args.tau_ns * 1e-9
    t_t = scen.talbot_time
    T = scen.timing.pulse_separation
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "l", "S_l", "B1_minus_l", "B2_2l", "B3_minus_l"])
    for model in _models(args.model):
        s = scen.with_model(model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            co = signal_coefficients(s, tau)
        st = [grating_strength(g, s.molecule) for g in s.gratings]
        for l in sorted(co.terms):
            b1 = talbot_coefficients(-l, l * tau / t_t, st[0].n0_eff, st[0].phi0_eff, model)
            b2 = talbot_coefficients(2 * l, l * (T + tau) / t_t, st[1].n0_eff, st[1].phi0_eff, model)
            b3 = talbot_coefficients(-l, 0.0, st[2].n0_eff, st[2].phi0_eff, model)
            w.writerow([model, l] + [f"{float(x):.12g}" for x in (co.terms[l], b1, b2, b3)])
    meta = _metadata(scen, "dump-coefficients", {"tau_s": tau})
    _write(args.output, buf.getvalue(), meta)
    return EXIT_OK


def cmd_show(args) -> int:
    _write(args.output, dump_scenario(_load(args)), None)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="talbotlau", description="Time-domain Talbot-Lau interferometer model")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, required=True):
        sp.add_argument("scenario", nargs=None if required else "?", help="scenario YAML file")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE",
                        help="override a field in SI units (s, m, rad, kg), e.g. beam.tilt=0.002")
        sp.add_argument("-o", "--output", help="output file (default stdout); a .json sidecar is written next to it")

    sp = sub.add_parser("scan", help="resonance scan S_N(tau)")
    scenario_args(sp)
    sp.add_argument("--model", choices=["quantum", "classical", "both"], default="quantum")
    sp.add_argument("--first-grating", choices=["shear", "absorptive"], default="shear",
                    help="treatment of the first grating's coefficients")
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("sweep", help="metric over a parameter grid")
    scenario_args(sp)
    sp.add_argument("--parameter", required=True, help="path such as molecule.beta_override or gratings.*.n0_eff")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--values", help="comma-separated values in SI units")
    g.add_argument("--grid", nargs=3, type=float, metavar=("START", "STOP", "COUNT"))
    sp.add_argument("--log", action="store_true", help="geometric spacing for --grid")
    sp.add_argument("--metric", choices=METRICS, default="visibility",
                    help="visibility (signed, at tau = 0), S_N_at_resonance, fringe_period (s)")
    sp.add_argument("--model", choices=["quantum", "classical", "both"], default="quantum")
    sp.add_argument("--jobs", type=int, default=0, help="worker processes (default: all cores)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="compare the analytic series with an oracle")
    scenario_args(sp)
    sp.add_argument("--oracle", choices=["wave", "mc"], default="wave")
    sp.add_argument("--tolerance", type=float,
                    help="wave: relative to max |S_N| (default 1e-3); mc: in standard errors (default 3)")
    sp.add_argument("--periods", type=int, default=32, help="wave grid: periods in the domain")
    sp.add_argument("--points", type=int, default=64, help="wave grid: points per period")
    sp.add_argument("--analytic-set", action="append", metavar="PATH=VALUE",
                    help="override applied to the analytic side only (sensitivity checks)")
    sp.add_argument("--no-refine", action="store_true", help="skip the grid-doubling convergence check")
    sp.add_argument("--particles", type=int, default=1_000_000, help="mc: number of particles")
    sp.add_argument("--seed", type=int, default=McSpec().seed, help="mc: seed")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("fit", help="fit fringe or cross-section data")
    sp.add_argument("kind", choices=["fringe", "cross-section"])
    sp.add_argument("data", help="CSV: tau_ns,S_res,S_off,S_N,sigma_SN or fluence_per_cm2,counts[,sigma]")
    sp.add_argument("--model", help="which model's rows to fit when the CSV holds several")
    sp.add_argument("--tau-off-ns", type=float, help="fixed phase reference in ns")
    sp.add_argument("--free-phase", action="store_true", help="fit the phase reference as well")
    sp.add_argument("--extract", action="store_true", help="convert widths to divergence and tilt (rad)")
    sp.add_argument("--scenario", help="scenario supplying grating period and speed for --extract")
    sp.add_argument("--period-nm", type=float, help="grating period in nm for --extract")
    sp.add_argument("--speed", type=float, help="beam speed in m/s for --extract")
    sp.add_argument("--set", action="append", metavar="PATH=VALUE", help=argparse.SUPPRESS)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("dump-coefficients", help="signal harmonics and grating coefficients at one delay")
    scenario_args(sp)
    sp.add_argument("--tau-ns", type=float, default=0.0, help="delay in ns")
    sp.add_argument("--model", choices=["quantum", "classical", "both"], default="quantum")
    sp.set_defaults(func=cmd_dump_coefficients)

    sp = sub.add_parser("show", help="print the resolved scenario")
    scenario_args(sp)
    sp.set_defaults(func=cmd_show)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError, CsvFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
