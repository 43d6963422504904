"""Time-dependent Lindblad dynamics of the driven atom-cavity system.

Model and conventions
---------------------
In the frame rotating at both drive frequencies the Hamiltonian is

    H/hbar = -Delta sigma_ee + delta2 sigma_aa
             + [ g a sigma_eb + (Omega/2) e^{i phi} sigma_ea + lam a^dag + h.c. ]

with Delta > 0 the blue detuning of cavity and classical field from their
respective atomic transitions, and delta2 the two-photon (Raman)
detuning.  The ground-state hyperfine splitting cancels in this frame and
never appears.

``kappa_*`` and ``gamma_*`` are field/amplitude decay rates: photon number
decays at 2*kappa and excited-state population at 2*gamma.  The collapse
operators are

    L_out  = sqrt(2 kappa_out)  a      output mirror
    L_in   = sqrt(2 kappa_in)   a      input mirror
    L_loss = sqrt(2 kappa_loss) a      mirror scatter/absorption
    L_sa   = sqrt(2 gamma_a) sigma_ae  spontaneous decay e -> a
    L_sb   = sqrt(2 gamma_b) sigma_be  spontaneous decay e -> b

The three cavity channels add identically in the master equation but are
kept separate so trajectory unravelings can attribute each emitted photon
to a mirror.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from . import hilbert
from .errors import AccuracyFailure, IntegrationFailure
from .hilbert import QuantumState, SpaceDescriptor, build_space

TWO_PI = 2.0 * math.pi

#: Default integrator tolerances (relative, absolute).
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10


@dataclass(frozen=True)
class SystemParams:
    """Physical rates and detunings, all in angular frequency (rad/s).

    Defaults describe a single cesium atom strongly coupled to a
    high-finesse Fabry-Perot cavity: g = 2pi x 16 MHz, total cavity field
    decay kappa = 2pi x 3.8 MHz split evenly between the two mirrors with
    no excess loss until calibration assigns one, atomic dipole decay
    gamma = 2pi x 2.6 MHz with an (unmeasured, configurable) 50/50
    branching between the two ground states, and a blue cavity-atom
    detuning Delta = 2pi x 10 MHz.
    """

    g: float = TWO_PI * 16e6
    kappa_in: float = TWO_PI * 1.9e6
    kappa_out: float = TWO_PI * 1.9e6
    kappa_loss: float = 0.0
    gamma_a: float = TWO_PI * 1.3e6
    gamma_b: float = TWO_PI * 1.3e6
    delta: float = TWO_PI * 10e6
    delta2: float = 0.0
    fock_cutoff: int = 4

    def __post_init__(self):
        for name in ("g", "kappa_in", "kappa_out", "kappa_loss", "gamma_a", "gamma_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"rate {name} must be non-negative")
        if self.fock_cutoff < 1:
            raise ValueError("fock_cutoff must be >= 1")

    @property
    def kappa(self) -> float:
        """Total cavity field decay rate."""
        return self.kappa_in + self.kappa_out + self.kappa_loss

    @property
    def gamma(self) -> float:
        """Total excited-state field decay rate."""
        return self.gamma_a + self.gamma_b

    def space(self) -> SpaceDescriptor:
        return build_space(self.fock_cutoff)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ConstantDrive:
    """Time-independent controls, mostly for analytic regression cases."""

    omega_value: float = 0.0
    lam_value: complex = 0j

    def omega(self, t: float) -> float:
        return self.omega_value

    def lam(self, t: float) -> complex:
        return self.lam_value


@dataclass
class TimeSeries:
    """Uniform time grid plus named expectation-value tracks.

    Standard tracks: ``P_a``, ``P_b``, ``P_e`` (ground/excited populations),
    ``n_cav`` (intracavity photon number), ``flux_out`` (photon flux through
    the output mirror, 2*kappa_out*n_cav, photons/s), ``a_mean`` (complex
    cavity field amplitude) and ``trace_residual`` (|Tr rho - 1|).
    """

    t: np.ndarray
    tracks: dict[str, np.ndarray] = field(default_factory=dict)
    sanity: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.t.ndim != 1 or self.t.size < 2:
            raise ValueError("time grid must be a 1-d array with at least two samples")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tracks[name]


_CAVITY_CHANNELS = ("out", "in", "loss")
CHANNELS = ("out", "in", "loss", "spont_a", "spont_b")


class SystemOps:
    """Pre-assembled operators for one (params, space) pair.

    Shared by the master-equation integrator and the trajectory engine;
    immutable after construction and safe to reuse across runs.
    """

    def __init__(self, params: SystemParams):
        self.params = params
        self.space = params.space()
        sp = self.space
        d = sp.total_dim

        self.a = hilbert.annihilation(sp)
        self.adag = self.a.conj().T
        self.n_op = self.adag @ self.a
        self.sig = {(i, j): hilbert.atomic_op(sp, i, j) for i in "abe" for j in "abe"}

        self.h_const = (
            -params.delta * self.sig[("e", "e")]
            + params.delta2 * self.sig[("a", "a")]
            + params.g * (self.a @ self.sig[("e", "b")] + self.adag @ self.sig[("b", "e")])
        )
        # Omega enters as (Omega/2) e^{i phi} sigma_ea + h.c.
        self.h_omega_raise = self.sig[("e", "a")]

        rates = {
            "out": 2.0 * params.kappa_out,
            "in": 2.0 * params.kappa_in,
            "loss": 2.0 * params.kappa_loss,
            "spont_a": 2.0 * params.gamma_a,
            "spont_b": 2.0 * params.gamma_b,
        }
        ops = {
            "out": self.a, "in": self.a, "loss": self.a,
            "spont_a": self.sig[("a", "e")], "spont_b": self.sig[("b", "e")],
        }
        self.channels = [
            (name, rates[name], ops[name]) for name in CHANNELS if rates[name] > 0.0
        ]
        self.ldl_sum = np.zeros((d, d), dtype=complex)
        for _, rate, op in self.channels:
            self.ldl_sum += rate * (op.conj().T @ op)
        self.h_eff_const = self.h_const - 0.5j * self.ldl_sum

        # Aggregate dissipator pieces (the cavity channels share operator a).
        self._rate_cav = 2.0 * params.kappa
        self._rate_sa = 2.0 * params.gamma_a
        self._rate_sb = 2.0 * params.gamma_b
        self._fdim = sp.fock_dim
        ia, ib, ie = (hilbert.LEVEL_A, hilbert.LEVEL_B, hilbert.LEVEL_E)
        f = self._fdim
        self._blk = {lev: slice(lev * f, (lev + 1) * f) for lev in (ia, ib, ie)}

    def hamiltonian(self, omega: float, phase: float, lam: complex) -> np.ndarray:
        h = self.h_const.copy()
        if omega:
            half = 0.5 * omega * complex(math.cos(phase), math.sin(phase))
            h += half * self.h_omega_raise
            h += np.conj(half) * self.h_omega_raise.conj().T
        if lam:
            h += lam * self.adag
            h += np.conj(lam) * self.a
        return h

    def h_eff(self, omega: float, phase: float, lam: complex) -> np.ndarray:
        """Non-Hermitian generator H - (i/2) sum L^dag L."""
        return self.hamiltonian(omega, phase, lam) - 0.5j * self.ldl_sum

    def lindblad_deriv(self, rho: np.ndarray, omega: float, phase: float,
                       lam: complex) -> np.ndarray:
        """Right-hand side d(rho)/dt of the master equation."""
        h = self.hamiltonian(omega, phase, lam)
        out = -1j * (h @ rho - rho @ h)
        # Cavity dissipator, all mirror channels combined.
        if self._rate_cav:
            out += self._rate_cav * (self.a @ rho @ self.adag)
            out -= 0.5 * self._rate_cav * (self.n_op @ rho + rho @ self.n_op)
        # Spontaneous emission: sigma_xe rho sigma_ex moves the (e,e) block
        # onto the (x,x) block; the anticommutator lives on sigma_ee.
        ga, gb = self._rate_sa, self._rate_sb
        if ga or gb:
            ee = self._blk[hilbert.LEVEL_E]
            block = rho[ee, ee]
            if ga:
                out[self._blk[hilbert.LEVEL_A], self._blk[hilbert.LEVEL_A]] += ga * block
            if gb:
                out[self._blk[hilbert.LEVEL_B], self._blk[hilbert.LEVEL_B]] += gb * block
            half = 0.5 * (ga + gb)
            out[ee, :] -= half * rho[ee, :]
            out[:, ee] -= half * rho[:, ee]
        return out

    def populations(self, rho: np.ndarray) -> tuple[float, float, float]:
        diag = np.diag(rho).real.reshape(hilbert.ATOM_DIM, self._fdim)
        pa, pb, pe = diag.sum(axis=1)
        return float(pa), float(pb), float(pe)


def hamiltonian_at(params: SystemParams, controls: tuple[float, float, complex],
                   space: SpaceDescriptor | None = None) -> np.ndarray:
    """Hamiltonian for instantaneous controls (Omega, phase_Omega, lambda).

    The result is Hermitian by construction (tested to 1e-12) and in units
    of rad/s with hbar = 1.
    """
    if space is not None and space.fock_cutoff != params.fock_cutoff:
        raise ValueError("space cutoff does not match params.fock_cutoff")
    omega, phase, lam = controls
    return SystemOps(params).hamiltonian(float(omega), float(phase), complex(lam))


def lindblad_rhs(state: QuantumState, params: SystemParams,
                 controls: tuple[float, float, complex]) -> np.ndarray:
    """Master-equation derivative d(rho)/dt for a density state."""
    rho = state.to_density().data
    if rho.shape[0] != params.space().total_dim:
        raise ValueError("state dimension does not match params.fock_cutoff")
    omega, phase, lam = controls
    return SystemOps(params).lindblad_deriv(rho, float(omega), float(phase), complex(lam))


def _sample_grid(t_span: tuple[float, float], sample_dt: float) -> np.ndarray:
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must satisfy t_end > t_start")
    n = max(2, int(round((t1 - t0) / sample_dt)) + 1)
    return np.linspace(t0, t1, n)


def integrate_master(initial: QuantumState, drive, params: SystemParams,
                     t_span: tuple[float, float], sample_dt: float = 1e-9, *,
                     rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                     method: str = "DOP853", max_step: float | None = None,
                     ops: SystemOps | None = None, sanity_stride: int = 0,
                     trace_tol: float = 1e-6) -> tuple[TimeSeries, QuantumState]:
    """Integrate the master equation over ``t_span`` with adaptive stepping.

    Parameters
    ----------
    initial : QuantumState
        Ket or density matrix; kets are promoted.
    drive : object
        Anything with ``omega(t) -> float`` and ``lam(t) -> complex``
        (a ``PulseSchedule`` or ``ConstantDrive``).
    t_span : (float, float)
        Integration interval; must cover the drive support of interest.
    sample_dt : float
        Spacing of the uniform output grid.
    max_step : float, optional
        Cap on the internal step so short pulses cannot be skipped.
        Defaults to 20 ns.
    sanity_stride : int
        If positive, check Hermiticity and positivity every that many
        samples and record the worst values in ``TimeSeries.sanity``.

    Returns
    -------
    (TimeSeries, QuantumState)
        Sampled tracks and the final density state.  The trace residual is
        recorded, never silently renormalized; residuals beyond
        ``trace_tol`` raise :class:`AccuracyFailure`.
    """
    if ops is None:
        ops = SystemOps(params)
    if initial.space.total_dim != ops.space.total_dim:
        raise ValueError("initial state dimension does not match params.fock_cutoff")
    rho0 = initial.to_density().data
    d = ops.space.total_dim
    grid = _sample_grid(t_span, sample_dt)
    if max_step is None:
        max_step = 20e-9

    def rhs(t, y):
        return ops.lindblad_deriv(y.reshape(d, d), drive.omega(t), 0.0, drive.lam(t)).reshape(-1)

    sol = solve_ivp(rhs, (grid[0], grid[-1]), rho0.reshape(-1).astype(complex),
                    method=method, t_eval=grid, rtol=rtol, atol=atol,
                    max_step=max_step, dense_output=False)
    if not sol.success:
        raise IntegrationFailure(f"master-equation integration failed: {sol.message}",
                                 time=sol.t[-1] if sol.t.size else grid[0])

    rhos = sol.y.T.reshape(-1, d, d)
    diag = np.einsum("tii->ti", rhos).real
    pops = diag.reshape(-1, hilbert.ATOM_DIM, ops.space.fock_dim).sum(axis=2)
    n_cav = diag @ np.tile(np.arange(ops.space.fock_dim, dtype=float), hilbert.ATOM_DIM)
    a_mean = np.einsum("ij,tji->t", ops.a, rhos)
    trace_residual = np.abs(diag.sum(axis=1) - 1.0)

    series = TimeSeries(grid, {
        "P_a": pops[:, 0], "P_b": pops[:, 1], "P_e": pops[:, 2],
        "n_cav": n_cav,
        "flux_out": 2.0 * params.kappa_out * n_cav,
        "a_mean": a_mean,
        "trace_residual": trace_residual,
    })

    worst = float(trace_residual.max())
    if worst > trace_tol:
        raise AccuracyFailure(
            f"trace residual {worst:.3e} exceeds {trace_tol:.1e}; tighten tolerances")

    if sanity_stride > 0:
        herm = 0.0
        min_eig = np.inf
        for k in range(0, len(grid), sanity_stride):
            r = rhos[k]
            herm = max(herm, float(np.max(np.abs(r - r.conj().T))))
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0]))
        series.sanity = {"herm_residual": herm, "min_eigenvalue": min_eig,
                         "trace_residual": worst}

    final = QuantumState.density(ops.space, rhos[-1])
    return series, final


@dataclass
class ValidationReport:
    case: str
    max_rel_err: float
    threshold: float
    passed: bool
    detail: str = ""


def validate_analytic(case_id: str, *, rtol: float = DEFAULT_RTOL,
                      atol: float = DEFAULT_ATOL) -> ValidationReport:
    """Run one closed-form regression case and compare against theory.

    ``cavity-decay``
        Undriven cavity prepared with n0 photons (atom parked in the
        decoupled ground state a): <n>(t) = n0 exp(-2 kappa t).
    ``driven-cavity``
        Constant resonant drive with g = 0: the field is the coherent
        transient alpha(t) = -i(lam/kappa)(1 - exp(-kappa t)), approaching
        the steady state <n> = |lam/kappa|^2.  Errors are taken relative
        to the steady-state photon number.
    ``vacuum-rabi``
        Lossless resonant exchange from |b,1>: P_e(t) = sin^2(g t).
    """
    params = SystemParams()
    sp = params.space()

    if case_id == "cavity-decay":
        n0 = 2
        kappa = params.kappa
        initial = QuantumState.basis(sp, "a", n0)
        span = (0.0, 1.5 / kappa)
        series, _ = integrate_master(initial, ConstantDrive(), params, span,
                                     sample_dt=span[1] / 400, rtol=rtol, atol=atol)
        expected = n0 * np.exp(-2.0 * kappa * series.t)
        err = float(np.max(np.abs(series["n_cav"] - expected) / expected))
        threshold = 1e-6
        detail = f"n0={n0}, span={span[1]:.3e} s"
    elif case_id == "driven-cavity":
        params = params.with_(g=0.0)
        kappa = params.kappa
        # Weak drive keeps the coherent state far below the Fock cutoff so
        # truncation error stays under the 1e-6 comparison threshold.
        lam = 0.2 * kappa
        initial = QuantumState.basis(sp, "b", 0)
        span = (0.0, 8.0 / kappa)
        series, _ = integrate_master(initial, ConstantDrive(lam_value=lam), params, span,
                                     sample_dt=span[1] / 800, rtol=rtol, atol=atol)
        alpha = -1j * (lam / kappa) * (1.0 - np.exp(-kappa * series.t))
        expected = np.abs(alpha) ** 2
        n_ss = (lam / kappa) ** 2
        err = float(np.max(np.abs(series["n_cav"] - expected)) / n_ss)
        threshold = 1e-6
        detail = f"lam/kappa={lam / kappa:.2f}, n_ss={n_ss:.4f}"
    elif case_id == "vacuum-rabi":
        params = params.with_(kappa_in=0.0, kappa_out=0.0, kappa_loss=0.0,
                              gamma_a=0.0, gamma_b=0.0, delta=0.0, delta2=0.0)
        g = params.g
        initial = QuantumState.basis(sp, "b", 1)
        span = (0.0, 3.0 * math.pi / g)
        series, _ = integrate_master(initial, ConstantDrive(), params, span,
                                     sample_dt=span[1] / 1500, rtol=rtol, atol=atol,
                                     max_step=0.5e-9)
        expected = np.sin(g * series.t) ** 2
        err = float(np.max(np.abs(series["P_e"] - expected)))
        threshold = 1e-4
        detail = f"period pi/g = {math.pi / g:.3e} s"
    else:
        raise ValueError(f"unknown validation case {case_id!r}; expected one of "
                         "'cavity-decay', 'driven-cavity', 'vacuum-rabi'")

    return ValidationReport(case_id, err, threshold, err < threshold, detail)


ANALYTIC_CASES = ("cavity-decay", "driven-cavity", "vacuum-rabi")
