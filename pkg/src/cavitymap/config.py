"""Flat key-value run configuration.

Frequencies are quoted the way the apparatus quotes them -- as MHz over
2 pi -- and converted to angular rad/s exactly once, on load; times carry
their unit in the key name (_ns, _us).  That keeps the classic stray
factor of 2 pi out of every downstream formula.

Resolution order: built-in defaults, then a config file, then explicit
overrides (command-line flags).  Unknown keys are rejected by name.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields

from .dynamics import SystemParams
from .errors import ConfigurationError
from .pulses import PulseSchedule

TWO_PI = 2.0 * math.pi

OUTDIR_ENV = "CAVITYMAP_OUTDIR"


@dataclass
class RunConfig:
    # physical rates and detunings (paper convention: MHz over 2 pi)
    g_mhz_over_2pi: float = 16.0
    kappa_mhz_over_2pi: float = 3.8
    kappa_loss_mhz_over_2pi: float | None = None  # None: solve by calibration
    gamma_mhz_over_2pi: float = 2.6
    gamma_a_fraction: float = 0.5
    delta_mhz_over_2pi: float = 10.0
    delta2_mhz_over_2pi: float = 0.0
    fock_cutoff: int = 4
    # pulse schedule
    omega_max_mhz_over_2pi: float = 20.8
    edge_time_ns: float = 100.0
    lambda_fwhm_ns: float = 150.0
    delta_t_us: float = 1.0
    t1_ns: float = 0.0
    lambda2_scale: float = 1.0
    # input calibration
    n_bar_in: float = 1.1
    n_bar_cavity: float = 0.68
    calibration_mode: str = "integrated"
    # experiment grids and windows
    window_ns: float = 200.0
    readout_window_us: float = 1.0
    t1_min_us: float = -2.5
    t1_max_us: float = 2.5
    t1_points: int = 15
    theta_points: int = 16
    polarization_modes: int = 2
    # numerics
    n_traj: int = 2000
    seed: int = 7041
    sample_dt_ns: float = 1.0
    rtol: float = 1e-8
    atol: float = 1e-10
    # output
    outdir: str = "runs"


_FIELDS = {f.name: f for f in fields(RunConfig)}
_OPTIONAL_FLOATS = {"kappa_loss_mhz_over_2pi"}


def _coerce(key: str, value):
    """Coerce a raw (string or literal) value to the field's type."""
    f = _FIELDS[key]
    if isinstance(value, str):
        text = value.strip()
        if key in _OPTIONAL_FLOATS and text.lower() in ("none", ""):
            return None
        try:
            if f.type in ("int",):
                return int(text)
            if f.type in ("float", "float | None"):
                return float(text)
        except ValueError:
            raise ConfigurationError(f"config key {key!r}: cannot parse {text!r} "
                                     f"as {f.type}") from None
        return text
    if value is None and key in _OPTIONAL_FLOATS:
        return None
    if f.type == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"config key {key!r}: expected an integer")
        return value
    if f.type in ("float", "float | None"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"config key {key!r}: expected a number")
        return float(value)
    if not isinstance(value, str):
        raise ConfigurationError(f"config key {key!r}: expected a string")
    return value


def _read_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def _validate(cfg: RunConfig) -> None:
    positive = ("g_mhz_over_2pi", "kappa_mhz_over_2pi", "gamma_mhz_over_2pi",
                "omega_max_mhz_over_2pi", "edge_time_ns", "lambda_fwhm_ns",
                "sample_dt_ns", "rtol", "atol", "window_ns", "readout_window_us")
    for key in positive:
        if getattr(cfg, key) <= 0:
            raise ConfigurationError(f"config key {key!r} must be positive")
    nonneg = ("delta2_mhz_over_2pi", "n_bar_in", "n_bar_cavity", "lambda2_scale")
    for key in nonneg:
        if getattr(cfg, key) < 0:
            raise ConfigurationError(f"config key {key!r} must be non-negative")
    if cfg.kappa_loss_mhz_over_2pi is not None and cfg.kappa_loss_mhz_over_2pi < 0:
        raise ConfigurationError("config key 'kappa_loss_mhz_over_2pi' must be non-negative")
    if not 0.0 <= cfg.gamma_a_fraction <= 1.0:
        raise ConfigurationError("config key 'gamma_a_fraction' must lie in [0, 1]")
    if cfg.fock_cutoff < 1:
        raise ConfigurationError("config key 'fock_cutoff' must be >= 1")
    if cfg.t1_points < 1:
        raise ConfigurationError("config key 't1_points' must be >= 1")
    if cfg.theta_points < 4:
        raise ConfigurationError("config key 'theta_points' must be >= 4")
    if cfg.n_traj < 1:
        raise ConfigurationError("config key 'n_traj' must be >= 1")
    if cfg.calibration_mode not in ("integrated", "peak"):
        raise ConfigurationError("config key 'calibration_mode' must be "
                                 "'integrated' or 'peak'")
    if cfg.polarization_modes not in (1, 2):
        raise ConfigurationError("config key 'polarization_modes' must be 1 or 2")


def parse_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Resolve a run configuration: defaults <- file <- overrides.

    Unknown keys, type mismatches, and out-of-range values raise
    :class:`ConfigurationError` naming the offending key.  The default
    output directory can also be set with the environment variable
    ``CAVITYMAP_OUTDIR`` (lowest precedence after the built-in default).
    """
    values = {}
    env_outdir = os.environ.get(OUTDIR_ENV)
    if env_outdir:
        values["outdir"] = env_outdir
    layers = []
    if path is not None:
        layers.append(_read_file(path))
    if overrides:
        layers.append(dict(overrides))
    for layer in layers:
        for key, value in layer.items():
            if key not in _FIELDS:
                raise ConfigurationError(f"unknown config key {key!r}")
            values[key] = _coerce(key, value)
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def system_params(cfg: RunConfig, kappa_loss: float | None = None) -> SystemParams:
    """Physical parameters in SI angular units.

    ``kappa_loss`` (rad/s) overrides the config value, which is how the
    calibration step injects the solved mirror-loss rate.  The total
    kappa is held at the configured value and split evenly between the
    mirrors after removing the loss share.
    """
    mhz = TWO_PI * 1e6
    kappa = cfg.kappa_mhz_over_2pi * mhz
    if kappa_loss is None:
        kappa_loss = (cfg.kappa_loss_mhz_over_2pi or 0.0) * mhz
    if kappa_loss > kappa:
        raise ConfigurationError("kappa_loss exceeds the total kappa")
    kappa_mirror = 0.5 * (kappa - kappa_loss)
    gamma = cfg.gamma_mhz_over_2pi * mhz
    return SystemParams(
        g=cfg.g_mhz_over_2pi * mhz,
        kappa_in=kappa_mirror,
        kappa_out=kappa_mirror,
        kappa_loss=kappa_loss,
        gamma_a=cfg.gamma_a_fraction * gamma,
        gamma_b=(1.0 - cfg.gamma_a_fraction) * gamma,
        delta=cfg.delta_mhz_over_2pi * mhz,
        delta2=cfg.delta2_mhz_over_2pi * mhz,
        fock_cutoff=cfg.fock_cutoff,
    )


def base_schedule(cfg: RunConfig, lambda_peak: float = 0.0) -> PulseSchedule:
    """Pulse-timing template with all toggles off."""
    return PulseSchedule(
        t1=cfg.t1_ns * 1e-9,
        delta_t=cfg.delta_t_us * 1e-6,
        omega_max=cfg.omega_max_mhz_over_2pi * TWO_PI * 1e6,
        lambda_peak=complex(lambda_peak),
        edge_time=cfg.edge_time_ns * 1e-9,
        lambda_width=cfg.lambda_fwhm_ns * 1e-9,
        lambda2_scale=cfg.lambda2_scale,
    )


def echo(cfg: RunConfig, **extra) -> dict:
    """Full config echo for output metadata (deterministic content)."""
    out = {f"config.{k}": v for k, v in asdict(cfg).items()}
    out.update(extra)
    return out
