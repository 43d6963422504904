"""Monte-Carlo wavefunction unraveling of the driven-cavity master equation.

Each trajectory evolves a pure state under the non-Hermitian generator
H_eff = H(t) - (i/2) sum_c L_c^dag L_c, with quantum jumps detected by the
standard norm-threshold rule: draw r uniform in [0, 1), integrate until
||psi||^2 falls to r, refine the crossing time by bisection, then apply a
collapse operator chosen with probability proportional to its instantaneous
jump rate.  Every jump is recorded with its channel tag ('out', 'in',
'loss', 'spont_a', 'spont_b').

Because all trajectories share one H_eff(t), the propagators over a fixed
fine grid are computed once (classical RK4 substeps on the matrix
equation) and reused; per-trajectory work is then a chain of matrix-vector
products.  Trajectory k draws its random numbers from a dedicated stream
seeded by (seed, stream, k), so ensembles are reproducible and independent
of batch or worker scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import multiprocessing
import numpy as np

from .dynamics import SystemOps, SystemParams
from .hilbert import ATOM_DIM, QuantumState


@dataclass
class TrajectoryRecord:
    """Outcome of a single trajectory."""

    final_populations: tuple[float, float, float]
    jumps: list[tuple[float, str]]
    checkpoint_populations: np.ndarray  # shape (n_checkpoints, 3)

    def jump_count(self, channel: str | None = None) -> int:
        if channel is None:
            return len(self.jumps)
        return sum(1 for _, name in self.jumps if name == channel)


@dataclass
class TrajectoryEnsemble:
    """A seeded batch of trajectories with per-trajectory jump records."""

    n_traj: int
    seed: int
    stream: int
    t_span: tuple[float, float]
    checkpoint_times: np.ndarray
    records: list[TrajectoryRecord] = field(default_factory=list)

    def final_population_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and standard error of (P_a, P_b, P_e) at the final time."""
        pops = np.array([r.final_populations for r in self.records])
        mean = pops.mean(axis=0)
        se = pops.std(axis=0, ddof=1) / math.sqrt(len(self.records))
        return mean, se

    def checkpoint_population_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean and standard error of the population tracks at checkpoints."""
        tracks = np.array([r.checkpoint_populations for r in self.records])
        mean = tracks.mean(axis=0)
        se = tracks.std(axis=0, ddof=1) / math.sqrt(len(self.records))
        return mean, se

    def fraction_with_jump(self, channel: str) -> float:
        hits = sum(1 for r in self.records if r.jump_count(channel) > 0)
        return hits / len(self.records)


class _Propagators:
    """Per-step propagators of the non-Hermitian evolution on a fine grid."""

    def __init__(self, ops: SystemOps, drive, t_span: tuple[float, float],
                 grid_dt: float, n_substeps: int | None):
        t0, t1 = float(t_span[0]), float(t_span[1])
        if not t1 > t0:
            raise ValueError("t_span must satisfy t_end > t_start")
        n_steps = max(1, int(math.ceil((t1 - t0) / grid_dt - 1e-9)))
        self.grid = t0 + grid_dt * np.arange(n_steps + 1)
        self.ops = ops
        self.drive = drive

        if n_substeps is None:
            scale = self._generator_scale()
            n_substeps = int(min(16, max(4, math.ceil(scale * grid_dt / 0.05))))
        self.n_substeps = n_substeps
        self.sub_h = grid_dt / n_substeps

        d = ops.space.total_dim
        self.U = np.empty((n_steps, d, d), dtype=complex)
        eye = np.eye(d, dtype=complex)
        for j in range(n_steps):
            self.U[j] = self._propagate_matrix(eye, self.grid[j], self.grid[j + 1])

    def _generator_scale(self) -> float:
        """Spectral-norm estimate of H_eff at peak drive, nan-safe."""
        probe = np.linspace(self.grid[0], self.grid[-1], 512)
        om_peak = max(self.drive.omega(t) for t in probe)
        lam_peak = max(abs(self.drive.lam(t)) for t in probe)
        h = self.ops.h_eff(om_peak, 0.0, complex(lam_peak))
        return float(np.linalg.norm(h, 2))

    def _gen(self, t: float) -> np.ndarray:
        """-i H_eff(t)."""
        return -1j * self.ops.h_eff(self.drive.omega(t), 0.0, self.drive.lam(t))

    def _rk4(self, y, t: float, h: float):
        k1 = self._gen(t) @ y
        mid = self._gen(t + 0.5 * h)
        k2 = mid @ (y + 0.5 * h * k1)
        k3 = mid @ (y + 0.5 * h * k2)
        k4 = self._gen(t + h) @ (y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _propagate_matrix(self, u0, ta: float, tb: float) -> np.ndarray:
        u = u0
        t, h = ta, self.sub_h
        while t < tb - 0.5 * h:
            u = self._rk4(u, t, min(h, tb - t))
            t += h
        return u

    def propagate_vector(self, psi: np.ndarray, ta: float, tb: float) -> np.ndarray:
        """Evolve one state over a partial step with matching accuracy."""
        if tb <= ta:
            return psi
        n = max(1, int(math.ceil((tb - ta) / self.sub_h - 1e-12)))
        h = (tb - ta) / n
        t = ta
        for _ in range(n):
            psi = self._rk4(psi, t, h)
            t += h
        return psi


# Shared context for fork-based worker processes (set before the pool
# is created; children inherit it copy-on-write).
_ENGINE: "_Engine | None" = None


class _Engine:
    def __init__(self, props: _Propagators, psi0: np.ndarray, seed: int, stream: int,
                 checkpoint_idx: np.ndarray, jump_time_tol: float):
        self.props = props
        self.psi0 = psi0
        self.seed = seed
        self.stream = stream
        self.checkpoint_idx = checkpoint_idx
        self.jump_time_tol = jump_time_tol
        ops = props.ops
        self.channel_names = [name for name, _, _ in ops.channels]
        self.channel_ops = [np.sqrt(rate) * op for _, rate, op in ops.channels]
        self.fock_dim = ops.space.fock_dim

    def _populations(self, psi: np.ndarray) -> np.ndarray:
        probs = np.abs(psi.reshape(ATOM_DIM, self.fock_dim)) ** 2
        tot = probs.sum()
        return probs.sum(axis=1) / tot

    def _bisect_jump(self, psi_lo, t_lo: float, t_hi: float, r: float):
        """Locate ||psi(t)||^2 = r inside (t_lo, t_hi] by bisection.

        The norm is monotonically non-increasing under H_eff, so plain
        bisection brackets the crossing.  Returns the refined time and the
        (unnormalized) state just before the jump.
        """
        while t_hi - t_lo > self.jump_time_tol:
            t_mid = 0.5 * (t_lo + t_hi)
            psi_mid = self.props.propagate_vector(psi_lo, t_lo, t_mid)
            if float(np.vdot(psi_mid, psi_mid).real) > r:
                t_lo, psi_lo = t_mid, psi_mid
            else:
                t_hi = t_mid
        return 0.5 * (t_lo + t_hi), psi_lo

    def _apply_jump(self, psi, rng) -> tuple[np.ndarray, int]:
        weights = np.array([float(np.vdot(c @ psi, c @ psi).real) for c in self.channel_ops])
        total = weights.sum()
        if total <= 0.0:
            return psi, -1
        pick = int(np.searchsorted(np.cumsum(weights), rng.random() * total))
        pick = min(pick, len(self.channel_ops) - 1)
        post = self.channel_ops[pick] @ psi
        return post / np.linalg.norm(post), pick

    def run_batch(self, start: int, stop: int) -> list[TrajectoryRecord]:
        props = self.props
        grid, U = props.grid, props.U
        n_steps = len(U)
        m = stop - start
        d = self.psi0.size

        rngs = [np.random.default_rng(np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream, k))) for k in range(start, stop)]
        thresholds = np.array([rng.random() for rng in rngs])
        has_channels = bool(self.channel_ops)

        psis = np.tile(self.psi0, (m, 1))
        jumps: list[list[tuple[float, str]]] = [[] for _ in range(m)]
        n_check = len(self.checkpoint_idx)
        check_pops = np.empty((m, n_check, ATOM_DIM))
        check_slot = 0
        if n_check and self.checkpoint_idx[0] == 0:
            for i in range(m):
                check_pops[i, 0] = self._populations(psis[i])
            check_slot = 1

        for j in range(n_steps):
            prev = psis
            psis = psis @ U[j].T
            if has_channels:
                norms2 = np.einsum("ij,ij->i", psis.conj(), psis).real
                for i in np.flatnonzero(norms2 < thresholds):
                    psi_lo, t_lo = prev[i], grid[j]
                    while True:
                        t_jump, psi_pre = self._bisect_jump(psi_lo, t_lo, grid[j + 1],
                                                            thresholds[i])
                        psi_post, pick = self._apply_jump(psi_pre, rngs[i])
                        if pick < 0:
                            thresholds[i] = -1.0
                            psis[i] = props.propagate_vector(psi_pre, t_jump, grid[j + 1])
                            break
                        jumps[i].append((float(t_jump), self.channel_names[pick]))
                        thresholds[i] = rngs[i].random()
                        psi_end = props.propagate_vector(psi_post, t_jump, grid[j + 1])
                        if float(np.vdot(psi_end, psi_end).real) >= thresholds[i]:
                            psis[i] = psi_end
                            break
                        psi_lo, t_lo = psi_post, t_jump
            while check_slot < n_check and self.checkpoint_idx[check_slot] == j + 1:
                for i in range(m):
                    check_pops[i, check_slot] = self._populations(psis[i])
                check_slot += 1

        records = []
        for i in range(m):
            pa, pb, pe = self._populations(psis[i])
            records.append(TrajectoryRecord((pa, pb, pe), jumps[i], check_pops[i]))
        return records


def _worker(span: tuple[int, int]) -> list[TrajectoryRecord]:
    return _ENGINE.run_batch(*span)


def run_trajectories(initial: QuantumState, drive, params: SystemParams,
                     n_traj: int, seed: int, *, t_span: tuple[float, float] | None = None,
                     stream: int = 0, grid_dt: float = 1e-9,
                     n_substeps: int | None = None,
                     checkpoint_times: np.ndarray | None = None,
                     n_workers: int = 1, batch_size: int = 256,
                     jump_time_tol: float | None = None,
                     ops: SystemOps | None = None) -> TrajectoryEnsemble:
    """Run a seeded ensemble of quantum-jump trajectories.

    Parameters
    ----------
    initial : QuantumState
        Pure initial state (``kind == 'ket'``).
    drive : object
        Control envelopes, as for :func:`cavitymap.dynamics.integrate_master`.
    n_traj, seed : int
        Ensemble size and base seed.  Trajectory k uses the random stream
        derived from ``(seed, stream, k)``; results are independent of
        ``n_workers`` and ``batch_size``.
    t_span : (float, float), optional
        Defaults to ``drive.span(pad=...)`` when the drive provides one.
    checkpoint_times : array, optional
        Times at which normalized populations are recorded per trajectory
        (snapped to the internal grid); default 11 evenly spaced points.
    jump_time_tol : float, optional
        Bisection accuracy for jump times; default 1e-3 / kappa.
    """
    if initial.kind != "ket":
        raise ValueError("run_trajectories requires a pure initial state")
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if ops is None:
        ops = SystemOps(params)
    if initial.space.total_dim != ops.space.total_dim:
        raise ValueError("initial state dimension does not match params.fock_cutoff")

    if t_span is None:
        if not hasattr(drive, "span"):
            raise ValueError("t_span is required for drives without a span() method")
        t_span = drive.span(pad=50e-9)

    if jump_time_tol is None:
        rate = params.kappa if params.kappa > 0 else max(params.gamma, 1.0)
        jump_time_tol = 1e-3 / rate

    props = _Propagators(ops, drive, t_span, grid_dt, n_substeps)
    grid = props.grid

    if checkpoint_times is None:
        checkpoint_times = np.linspace(grid[0], grid[-1], 11)
    checkpoint_times = np.asarray(checkpoint_times, dtype=float)
    idx = np.unique(np.clip(np.rint((checkpoint_times - grid[0]) /
                                    (grid[1] - grid[0])).astype(int), 0, len(grid) - 1))
    actual_checkpoints = grid[idx]

    psi0 = initial.data / np.linalg.norm(initial.data)
    engine = _Engine(props, psi0, int(seed), int(stream), idx, jump_time_tol)

    spans = [(s, min(s + batch_size, n_traj)) for s in range(0, n_traj, batch_size)]
    global _ENGINE
    _ENGINE = engine
    try:
        if n_workers <= 1 or len(spans) == 1:
            batches = [engine.run_batch(*span) for span in spans]
        else:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=n_workers, mp_context=ctx) as pool:
                batches = list(pool.map(_worker, spans))
    finally:
        _ENGINE = None

    records: list[TrajectoryRecord] = []
    for batch in batches:
        records.extend(batch)
    return TrajectoryEnsemble(n_traj, int(seed), int(stream),
                              (float(grid[0]), float(grid[-1])),
                              actual_checkpoints, records)
