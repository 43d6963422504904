"""Reduction of raw simulation output to the protocol's reported numbers.

Windowed photon counts, cosine fringe fits, the coherent/incoherent
partition of trajectory ensembles, the independent-field overlap estimate
of fringe visibility, an excitation-bookkeeping audit, and CSV
serialization.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .dynamics import SystemParams, TimeSeries
from .errors import DegenerateFitError
from .trajectories import TrajectoryEnsemble

CSV_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# windowed counts

def window_count(series: TimeSeries, window_start: float, window_length: float,
                 track: str = "flux_out") -> float:
    """Integrate a flux track over a detection window.

    The track is treated as piecewise linear between samples (trapezoid
    rule, with interpolated values at the window edges), which makes the
    count exactly additive over adjacent windows.

    Raises ``ValueError`` if the window is not contained in the time grid.
    """
    if window_length < 0:
        raise ValueError("window_length must be non-negative")
    t = series.t
    a, b = float(window_start), float(window_start + window_length)
    eps = 1e-9 * max(t[-1] - t[0], abs(t[0]), 1.0)
    if a < t[0] - eps or b > t[-1] + eps:
        raise ValueError(f"window [{a:.3e}, {b:.3e}] outside grid span "
                         f"[{t[0]:.3e}, {t[-1]:.3e}]")
    a, b = max(a, t[0]), min(b, t[-1])
    if b <= a:
        return 0.0
    f = np.asarray(series[track], dtype=float)
    inside = (t > a) & (t < b)
    knots = np.concatenate(([a], t[inside], [b]))
    values = np.interp(knots, t, f)
    return float(np.trapezoid(values, knots))


# ---------------------------------------------------------------------------
# fringe fitting

@dataclass
class FringeFit:
    """Cosine model n(theta) = A (1 + v cos(theta - phi))."""

    v: float
    phi: float
    A: float
    sigma_v: float
    sigma_phi: float
    rms_residual: float


def fit_visibility(theta: np.ndarray, values: np.ndarray) -> FringeFit:
    """Least-squares cosine fit of fringe data.

    The model ``A + B cos(theta) + C sin(theta)`` is linear in its
    parameters, so the fit has a unique global optimum; visibility and
    phase follow as v = sqrt(B^2 + C^2)/A and phi = atan2(C, B), with
    standard errors propagated from the linear-model covariance.

    Requires at least 4 points spanning at least 2 pi.  Raises
    :class:`DegenerateFitError` if the fitted offset A is not positive.
    """
    theta = np.asarray(theta, dtype=float)
    values = np.asarray(values, dtype=float)
    if theta.ndim != 1 or theta.shape != values.shape:
        raise ValueError("theta and values must be 1-d arrays of equal length")
    if theta.size < 4:
        raise ValueError("need at least 4 fringe points")
    if theta.max() - theta.min() < 2.0 * math.pi - 1e-9:
        raise ValueError("theta grid must span at least 2 pi")

    X = np.column_stack([np.ones_like(theta), np.cos(theta), np.sin(theta)])
    coef, _, _, _ = np.linalg.lstsq(X, values, rcond=None)
    A, B, C = (float(c) for c in coef)
    if A <= 0.0:
        raise DegenerateFitError(f"fitted offset A = {A:.3e} is not positive")

    resid = values - X @ coef
    dof = max(theta.size - 3, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)

    amp = math.hypot(B, C)
    v = amp / A
    phi = math.atan2(C, B)
    if amp > 0.0:
        jac_v = np.array([-amp / A ** 2, B / (amp * A), C / (amp * A)])
        jac_phi = np.array([0.0, -C / amp ** 2, B / amp ** 2])
        sigma_v = math.sqrt(max(float(jac_v @ cov @ jac_v), 0.0))
        sigma_phi = math.sqrt(max(float(jac_phi @ cov @ jac_phi), 0.0))
    else:
        # Flat data: the phase is undefined; report the scale of v noise.
        sigma_v = math.sqrt(max(cov[1, 1] + cov[2, 2], 0.0)) / A
        sigma_phi = math.pi
    return FringeFit(v, phi, A, sigma_v, sigma_phi,
                     float(np.sqrt(np.mean(resid ** 2))))


# ---------------------------------------------------------------------------
# coherent / incoherent partition

@dataclass
class PartitionResult:
    """Split of the trajectory-estimated transfer probability.

    A trajectory contributes its final lower-ground-state population
    to ``p_c`` if it suffered no spontaneous-emission jump during the run
    and to ``p_i_component`` otherwise, so the two add up to the total
    trajectory estimate exactly.
    """

    p_c: float
    p_i_component: float
    sigma_c: float
    sigma_i: float
    n_traj: int

    @property
    def total(self) -> float:
        return self.p_c + self.p_i_component


def partition_coherent(ensemble: TrajectoryEnsemble) -> PartitionResult:
    """Partition an absorption ensemble by spontaneous-emission history.

    Photon loss through the mirrors does not destroy the ground-state
    superposition, so only ``spont_a``/``spont_b`` jumps disqualify a
    trajectory from the coherent component.
    """
    if not ensemble.records:
        raise ValueError("empty trajectory ensemble")
    n = len(ensemble.records)
    w_c = np.zeros(n)
    w_i = np.zeros(n)
    for k, rec in enumerate(ensemble.records):
        spont = rec.jump_count("spont_a") + rec.jump_count("spont_b")
        if spont == 0:
            w_c[k] = rec.final_populations[0]
        else:
            w_i[k] = rec.final_populations[0]
    sig_c = float(w_c.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    sig_i = float(w_i.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return PartitionResult(float(w_c.mean()), float(w_i.mean()), sig_c, sig_i, n)


# ---------------------------------------------------------------------------
# pulse-overlap visibility estimate

def _as_envelope(env):
    """Accept a callable t -> complex or a (t, values) sample pair."""
    if callable(env):
        return env, None
    t, vals = env
    t = np.asarray(t, dtype=float)
    vals = np.asarray(vals, dtype=complex)
    if t.ndim != 1 or t.shape[0] != vals.shape[0]:
        raise ValueError("sampled envelope must be a (t, values) pair of equal length")
    return None, (t, vals)


def overlap_visibility(env_alpha, env_beta, window: tuple[float, float]) -> float:
    """Fringe-visibility estimate from the overlap of two field envelopes.

        v = 2 |int alpha* beta dt| / (int |alpha|^2 dt + int |beta|^2 dt)

    evaluated on ``window = (t_start, t_end)``.  By Cauchy-Schwarz and the
    AM-GM inequality the result lies in [0, 1], reaching 1 only when the
    envelopes agree up to a global phase.  Envelopes may be callables or
    ``(t, values)`` sample pairs (integrated as piecewise-linear data).

    Raises ``ValueError`` when both envelopes vanish on the window.
    """
    a, b = float(window[0]), float(window[1])
    if not b > a:
        raise ValueError("window must have positive length")
    fa, sa = _as_envelope(env_alpha)
    fb, sb = _as_envelope(env_beta)

    if fa is not None and fb is not None:
        def integrate(f):
            re = quad(lambda t: f(t).real, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
            im = quad(lambda t: f(t).imag, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
            return complex(re, im)

        cross = integrate(lambda t: np.conj(fa(t)) * fb(t))
        pa = integrate(lambda t: complex(abs(fa(t)) ** 2)).real
        pb = integrate(lambda t: complex(abs(fb(t)) ** 2)).real
    else:
        if sa is None or sb is None:
            raise ValueError("mixing callable and sampled envelopes is not supported")
        ta, va = sa
        tb, vb = sb
        knots = np.union1d(ta[(ta > a) & (ta < b)], tb[(tb > a) & (tb < b)])
        knots = np.concatenate(([a], knots, [b]))
        ia = np.interp(knots, ta, va.real) + 1j * np.interp(knots, ta, va.imag)
        ib = np.interp(knots, tb, vb.real) + 1j * np.interp(knots, tb, vb.imag)
        cross = np.trapezoid(np.conj(ia) * ib, knots)
        pa = float(np.trapezoid(np.abs(ia) ** 2, knots))
        pb = float(np.trapezoid(np.abs(ib) ** 2, knots))

    denom = pa + pb
    if denom <= 0.0:
        raise ValueError("both envelopes vanish on the window")
    return float(2.0 * abs(cross) / denom)


# ---------------------------------------------------------------------------
# excitation bookkeeping

def photon_bookkeeping(series: TimeSeries, params: SystemParams) -> dict[str, float]:
    """Audit where the initial excitation went during an undriven run.

    With the cavity drive off, the excitation number N = P_a + P_e + n_cav
    obeys dN/dt = -2 kappa n_cav - 2 gamma_b P_e exactly: photons leave
    through the three mirror channels or the spontaneous branch to the
    upper ground state, while spontaneous decay back to the lower ground
    state recycles the excitation (those photons are emitted but the
    stored quantum survives and exits again later).  The returned dict
    contains the per-channel integrals, the recycled-photon integral, the
    residual excitation at the end of the run, and ``closure`` =
    (everything terminal) + residual - N(0), which should vanish to
    quadrature accuracy.
    """
    t = series.t
    n = series["n_cav"]
    pe = series["P_e"]
    out = {
        "out_photons": float(np.trapezoid(2.0 * params.kappa_out * n, t)),
        "in_photons": float(np.trapezoid(2.0 * params.kappa_in * n, t)),
        "loss_photons": float(np.trapezoid(2.0 * params.kappa_loss * n, t)),
        "spont_b_photons": float(np.trapezoid(2.0 * params.gamma_b * pe, t)),
        "spont_a_photons": float(np.trapezoid(2.0 * params.gamma_a * pe, t)),
    }
    n_start = float(series["P_a"][0] + pe[0] + n[0])
    n_end = float(series["P_a"][-1] + pe[-1] + n[-1])
    out["residual_excitation"] = n_end
    out["initial_excitation"] = n_start
    terminal = (out["out_photons"] + out["in_photons"] + out["loss_photons"]
                + out["spont_b_photons"])
    out["closure"] = terminal + n_end - n_start
    return out


# ---------------------------------------------------------------------------
# CSV serialization

def _fmt(x) -> str:
    if isinstance(x, complex):
        return f"{x.real!r}{x.imag:+}j" if x.imag else repr(x.real)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _meta_lines(schema: str, meta: dict | None) -> list[str]:
    lines = [f"# schema={schema}-v{CSV_SCHEMA_VERSION}"]
    for key in sorted(meta or {}):
        lines.append(f"# {key}={_fmt(meta[key])}")
    return lines


def _write_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            if os.path.exists(tmp):
                os.remove(tmp)
        finally:
            raise IOError(f"cannot write {path}: {exc}") from exc


def _rows(header: list[str], columns: list[np.ndarray]) -> list[str]:
    lines = [",".join(header)]
    for i in range(len(columns[0])):
        lines.append(",".join(_fmt(col[i]) for col in columns))
    return lines


def emit_csv(result, path: str, meta: dict | None = None) -> str:
    """Serialize an experiment result to a schema-versioned CSV file.

    Deterministic: the same result and metadata always produce the same
    bytes.  Files are written to a temporary name and atomically renamed,
    so an interrupted run never leaves a partial CSV behind.  Dispatches
    on the result type; plain :class:`TimeSeries` objects get the generic
    track-dump schema.
    """
    from .protocol import AbsorptionRecord, EmissionRecord, FringeResult, SweepResult

    if isinstance(result, SweepResult):
        lines = _meta_lines("sweep", meta)
        lines += _rows(
            ["t1_s", "r", "r_c", "r_i", "r_c_err", "r_i_err"],
            [result.t1, result.r, result.r_c, result.r_i,
             result.r_c_err, result.r_i_err])
        lines.append(f"# p_i={_fmt(result.p_i)}")
    elif isinstance(result, FringeResult):
        lines = _meta_lines("fringe", meta)
        lines += _rows(["theta_rad", "n_a", "n_i", "R_a", "R_i"],
                       [result.theta, result.n_a, result.n_i, result.R_a, result.R_i])
        for label, fit in (("a", result.fit_a), ("i", result.fit_i)):
            if fit is not None:
                lines.append(f"# v_{label}={_fmt(fit.v)}")
                lines.append(f"# phi_{label}={_fmt(fit.phi)}")
                lines.append(f"# sigma_v_{label}={_fmt(fit.sigma_v)}")
        lines.append(f"# window_s={_fmt(result.window)}")
    elif isinstance(result, (EmissionRecord, AbsorptionRecord)):
        series = result.series
        lines = _meta_lines("emission", meta)
        lines += _rows(
            ["t_s", "flux_out_per_s", "P_a", "P_b", "P_e", "n_cav"],
            [series.t, series["flux_out"], series["P_a"], series["P_b"],
             series["P_e"], series["n_cav"]])
        if isinstance(result, EmissionRecord):
            lines.append(f"# emission_prob={_fmt(result.emission_prob)}")
        else:
            lines.append(f"# p={_fmt(result.p)}")
            lines.append(f"# detection_prob={_fmt(result.detection_prob)}")
    elif isinstance(result, TimeSeries):
        lines = _meta_lines("timeseries", meta)
        names, columns = ["t_s"], [result.t]
        for name in result.tracks:
            col = result.tracks[name]
            if np.iscomplexobj(col):
                names += [f"{name}_re", f"{name}_im"]
                columns += [col.real, col.imag]
            else:
                names.append(name)
                columns.append(col)
        lines += _rows(names, columns)
    else:
        raise TypeError(f"emit_csv does not know how to serialize {type(result).__name__}")

    _write_atomic(path, "\n".join(lines) + "\n")
    return path
