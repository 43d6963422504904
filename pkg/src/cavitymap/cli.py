"""Command-line entry point: one subcommand per protocol experiment.

    cavitymap validate          analytic regression suite
    cavitymap single-photon     photon generation from the stored state
    cavitymap absorb            adiabatic + incoherent absorption, p_a/p_i/r
    cavitymap sweep             arrival-time sweep of r(t1) with partition
    cavitymap fringe            phase-fringe scan with visibility fits
    cavitymap efficiency        analytic transfer-efficiency budget

Every run writes its CSVs plus a one-page ``summary.txt`` to the output
directory, with the resolved configuration echoed into both.  Exit codes:
0 success, 2 configuration error, 3 integration/accuracy failure,
4 calibration failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import fields

import numpy as np

from . import __version__
from .analysis import emit_csv
from .config import RunConfig, base_schedule, echo, parse_config, system_params
from .dynamics import ANALYTIC_CASES, SystemOps, validate_analytic
from .errors import (AccuracyFailure, CalibrationFailure, CavitymapError,
                     ConfigurationError, IntegrationFailure)
from .protocol import (calibrate_input, efficiency_budget, fringe_experiment,
                       run_absorption, run_single_photon, sweep_arrival)

SUBCOMMANDS = ("validate", "single-photon", "absorb", "sweep", "fringe", "efficiency")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavitymap", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--workers", type=int, default=1,
                        help="parallel workers for trajectory ensembles "
                             "(does not affect results)")
    for f in fields(RunConfig):
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name,
                            metavar="V", help=argparse.SUPPRESS)
    return parser


def _write_summary(outdir: str, lines: list[str]) -> None:
    path = os.path.join(outdir, "summary.txt")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    print("\n".join(lines))


def _calibrated(cfg: RunConfig):
    """Calibrate the drive, then return (params, schedule, meta)."""
    params0 = system_params(cfg)
    cal = calibrate_input(
        cfg.n_bar_in, params0, lambda_fwhm=cfg.lambda_fwhm_ns * 1e-9,
        target_intracavity=cfg.n_bar_cavity, interpretation=cfg.calibration_mode)
    if cfg.kappa_loss_mhz_over_2pi is not None:
        # Explicit loss rate wins; only the drive amplitude is calibrated.
        params = params0
        lam_peak = math.sqrt(2.0 * params.kappa_in * cfg.n_bar_in /
                             (cfg.lambda_fwhm_ns * 1e-9 * math.sqrt(math.pi / (8 * math.log(2)))))
        kappa_loss = params.kappa_loss
    else:
        params = cal.apply(params0)
        lam_peak = cal.lambda_peak
        kappa_loss = cal.kappa_loss
    sched = base_schedule(cfg, lam_peak)
    meta = echo(cfg, version=__version__,
                calibrated_kappa_loss_rad_s=kappa_loss,
                calibrated_lambda_peak_rad_s=lam_peak)
    return params, sched, meta


def _cmd_validate(cfg: RunConfig, workers: int) -> int:
    lines = []
    ok = True
    for case in ANALYTIC_CASES:
        report = validate_analytic(case, rtol=cfg.rtol, atol=cfg.atol)
        ok &= report.passed
        lines.append(f"{case}: {'PASS' if report.passed else 'FAIL'} "
                     f"(max rel err {report.max_rel_err:.3e}, "
                     f"threshold {report.threshold:.1e})")
    _write_summary(cfg.outdir, lines)
    if not ok:
        raise AccuracyFailure("analytic validation failed; see summary")
    return 0


def _cmd_single_photon(cfg: RunConfig, workers: int) -> int:
    params = system_params(cfg)
    sched = base_schedule(cfg).with_(omega2_on=True, delta_t=0.0)
    record = run_single_photon(params, sched, sample_dt=cfg.sample_dt_ns * 1e-9,
                               rtol=cfg.rtol, atol=cfg.atol)
    meta = echo(cfg, version=__version__, subcommand="single-photon")
    emit_csv(record, os.path.join(cfg.outdir, "emission.csv"), meta)
    peak = record.series.t[int(np.argmax(record.pulse_shape))]
    _write_summary(cfg.outdir, [
        f"emission_probability = {record.emission_prob:.6f}",
        f"flux_peak_time_us = {peak * 1e6:.4f}",
        "wrote emission.csv",
    ])
    return 0


def _cmd_absorb(cfg: RunConfig, workers: int) -> int:
    params, sched, meta = _calibrated(cfg)
    ops = SystemOps(params)
    t1 = cfg.t1_ns * 1e-9
    dt = cfg.sample_dt_ns * 1e-9
    window = cfg.readout_window_us * 1e-6
    rec_a = run_absorption(params, sched, t1, True, readout_window=window,
                           sample_dt=dt, ops=ops, rtol=cfg.rtol, atol=cfg.atol)
    rec_i = run_absorption(params, sched, t1, False, readout_window=window,
                           sample_dt=dt, ops=ops, rtol=cfg.rtol, atol=cfg.atol)
    meta["subcommand"] = "absorb"
    emit_csv(rec_a, os.path.join(cfg.outdir, "absorption_adiabatic.csv"), meta)
    emit_csv(rec_i, os.path.join(cfg.outdir, "absorption_incoherent.csv"), meta)
    zeta = rec_a.p / cfg.n_bar_in
    budget = efficiency_budget(params.kappa_in, params.kappa_out, params.kappa_loss, 1)
    _write_summary(cfg.outdir, [
        f"p_a = {rec_a.p:.6f}",
        f"p_i = {rec_i.p:.6f}",
        f"r = {rec_a.p / rec_i.p:.4f}" if rec_i.p > 0 else "r = undefined (p_i = 0)",
        f"zeta = p_a / n_bar = {zeta:.6f}",
        f"zeta_budget (1 polarization) = {budget:.4f}",
        f"detection_prob_adiabatic = {rec_a.detection_prob:.6f}",
        f"detection_prob_incoherent = {rec_i.detection_prob:.6f}",
        "wrote absorption_adiabatic.csv, absorption_incoherent.csv",
    ])
    return 0


def _cmd_sweep(cfg: RunConfig, workers: int) -> int:
    params, sched, meta = _calibrated(cfg)
    grid = np.linspace(cfg.t1_min_us * 1e-6, cfg.t1_max_us * 1e-6, cfg.t1_points)
    result = sweep_arrival(params, sched, grid, cfg.n_traj, cfg.seed,
                           n_workers=workers, sample_dt=cfg.sample_dt_ns * 1e-9,
                           rtol=cfg.rtol, atol=cfg.atol)
    meta["subcommand"] = "sweep"
    emit_csv(result, os.path.join(cfg.outdir, "sweep.csv"), meta)
    k = int(np.argmax(result.r))
    _write_summary(cfg.outdir, [
        f"p_i = {result.p_i:.6f}",
        f"r_max = {result.r[k]:.4f} at t1 = {result.t1[k] * 1e6:.3f} us",
        f"n_traj_per_point = {cfg.n_traj}",
        "wrote sweep.csv",
    ])
    return 0


def _cmd_fringe(cfg: RunConfig, workers: int) -> int:
    params, sched, meta = _calibrated(cfg)
    theta = np.linspace(0.0, 2.0 * math.pi, cfg.theta_points)
    result = fringe_experiment(params, sched, theta, cfg.window_ns * 1e-9,
                               sample_dt=cfg.sample_dt_ns * 1e-9,
                               rtol=cfg.rtol, atol=cfg.atol)
    meta["subcommand"] = "fringe"
    emit_csv(result, os.path.join(cfg.outdir, "fringe.csv"), meta)
    _write_summary(cfg.outdir, [
        f"v_a = {result.fit_a.v:.4f} +/- {result.fit_a.sigma_v:.4f}",
        f"v_i = {result.fit_i.v:.4f} +/- {result.fit_i.sigma_v:.4f}",
        f"window_ns = {cfg.window_ns:.1f}",
        "wrote fringe.csv",
    ])
    return 0


def _cmd_efficiency(cfg: RunConfig, workers: int) -> int:
    params = system_params(cfg)
    zeta = efficiency_budget(params.kappa_in, params.kappa_out, params.kappa_loss,
                             cfg.polarization_modes)
    _write_summary(cfg.outdir, [
        f"zeta_max = {zeta:.4f}",
        f"kappa_in/kappa = {params.kappa_in / params.kappa:.4f}",
        f"polarization_modes = {cfg.polarization_modes}",
    ])
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "single-photon": _cmd_single_photon,
    "absorb": _cmd_absorb,
    "sweep": _cmd_sweep,
    "fringe": _cmd_fringe,
    "efficiency": _cmd_efficiency,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name) is not None}
    try:
        cfg = parse_config(args.config, overrides)
        os.makedirs(cfg.outdir, exist_ok=True)
        return _COMMANDS[args.subcommand](cfg, max(1, args.workers))
    except ConfigurationError as exc:
        print(f"cavitymap: configuration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (IntegrationFailure, AccuracyFailure) as exc:
        print(f"cavitymap: {exc}", file=sys.stderr)
        return exc.exit_code
    except CalibrationFailure as exc:
        print(f"cavitymap: calibration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except CavitymapError as exc:
        print(f"cavitymap: {exc}", file=sys.stderr)
        return exc.exit_code


def entry() -> None:
    raise SystemExit(main())
