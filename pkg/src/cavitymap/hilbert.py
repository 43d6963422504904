"""Composite Hilbert space for one three-level atom and one cavity mode.

The system is a lambda atom -- two stable ground states coupled to one
excited state -- together with a single bosonic cavity mode truncated at
``fock_cutoff`` photons.  Atomic levels are indexed

    a = 0   lower ground state (Cs 6S_1/2, F=3 in the physical apparatus)
    b = 1   upper ground state (F=4)
    e = 2   excited state      (6P_3/2, F=3')

and the composite basis is ordered atom-major:

    index(level, n) = level * (fock_cutoff + 1) + n,   n = 0 .. fock_cutoff.

All operators are dense complex matrices; at the dimensions used here
(``total_dim`` of order tens) sparse storage buys nothing.  Every array
produced by this module follows the ordering above, including anything
serialized downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEVEL_A, LEVEL_B, LEVEL_E = 0, 1, 2
LEVEL_NAMES = ("a", "b", "e")
_LEVEL_BY_NAME = {"a": LEVEL_A, "b": LEVEL_B, "e": LEVEL_E}

ATOM_DIM = 3


def level_index(level) -> int:
    """Normalize an atomic level given as 'a'/'b'/'e' or 0/1/2."""
    if isinstance(level, str):
        try:
            return _LEVEL_BY_NAME[level]
        except KeyError:
            raise ValueError(f"unknown atomic level {level!r}; expected one of 'a', 'b', 'e'") from None
    level = int(level)
    if level not in (LEVEL_A, LEVEL_B, LEVEL_E):
        raise ValueError(f"atomic level index {level} out of range 0..2")
    return level


@dataclass(frozen=True)
class SpaceDescriptor:
    """Dimensions and index map of the composite atom (x) cavity space.

    Parameters
    ----------
    fock_cutoff : int
        Highest retained photon number; the cavity factor has
        ``fock_cutoff + 1`` levels.  Must be at least 1 so that one
        stored photon is representable.
    """

    fock_cutoff: int

    def __post_init__(self):
        if self.fock_cutoff < 1:
            raise ValueError(f"fock_cutoff must be >= 1, got {self.fock_cutoff}")

    @property
    def atom_dim(self) -> int:
        return ATOM_DIM

    @property
    def fock_dim(self) -> int:
        return self.fock_cutoff + 1

    @property
    def total_dim(self) -> int:
        return ATOM_DIM * self.fock_dim

    def index(self, level, n: int) -> int:
        """Composite basis index of |level, n> (atom-major ordering)."""
        lev = level_index(level)
        if not 0 <= n <= self.fock_cutoff:
            raise ValueError(f"photon number {n} out of range 0..{self.fock_cutoff}")
        return lev * self.fock_dim + n


def build_space(fock_cutoff: int) -> SpaceDescriptor:
    """Construct the composite space with the given photon-number cutoff."""
    return SpaceDescriptor(int(fock_cutoff))


def identity(space: SpaceDescriptor) -> np.ndarray:
    return np.eye(space.total_dim, dtype=complex)


def annihilation(space: SpaceDescriptor) -> np.ndarray:
    """Cavity annihilation operator a, identity on the atomic factor.

    Matrix elements satisfy <n-1| a |n> = sqrt(n) for 1 <= n <= cutoff;
    the top Fock level is truncated, so ``[a, a^dag] = 1`` holds only on
    the block below the cutoff.
    """
    ladder = np.diag(np.sqrt(np.arange(1, space.fock_dim)), k=1).astype(complex)
    return np.kron(np.eye(ATOM_DIM), ladder)


def number_op(space: SpaceDescriptor) -> np.ndarray:
    """Photon-number operator a^dag a."""
    return np.kron(np.eye(ATOM_DIM), np.diag(np.arange(space.fock_dim))).astype(complex)


def atomic_op(space: SpaceDescriptor, i, j) -> np.ndarray:
    """Atomic operator sigma_ij = |i><j| tensored with the cavity identity.

    ``i == j`` gives the projector onto level ``i`` summed over photon
    number; ``i != j`` gives the corresponding flip operator.  Levels may
    be given by name ('a', 'b', 'e') or by index.
    """
    ii, jj = level_index(i), level_index(j)
    flip = np.zeros((ATOM_DIM, ATOM_DIM), dtype=complex)
    flip[ii, jj] = 1.0
    return np.kron(flip, np.eye(space.fock_dim))


def basis_ket(space: SpaceDescriptor, level, n: int) -> np.ndarray:
    """State vector for the product basis state |level, n>."""
    vec = np.zeros(space.total_dim, dtype=complex)
    vec[space.index(level, n)] = 1.0
    return vec


@dataclass
class QuantumState:
    """A pure state vector or a density matrix on a composite space.

    ``kind`` is ``'ket'`` (``data`` has shape ``(dim,)``) or ``'density'``
    (``data`` has shape ``(dim, dim)``).
    """

    kind: str
    data: np.ndarray
    space: SpaceDescriptor

    @classmethod
    def ket(cls, space: SpaceDescriptor, vec: np.ndarray, normalize: bool = True) -> "QuantumState":
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if vec.shape != (space.total_dim,):
            raise ValueError(f"ket has dimension {vec.size}, space expects {space.total_dim}")
        if normalize:
            nrm = np.linalg.norm(vec)
            if nrm == 0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / nrm
        return cls("ket", vec, space)

    @classmethod
    def basis(cls, space: SpaceDescriptor, level, n: int) -> "QuantumState":
        return cls("ket", basis_ket(space, level, n), space)

    @classmethod
    def density(cls, space: SpaceDescriptor, mat: np.ndarray) -> "QuantumState":
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (space.total_dim, space.total_dim):
            raise ValueError(f"density matrix has shape {mat.shape}, space expects "
                             f"({space.total_dim}, {space.total_dim})")
        return cls("density", mat, space)

    def to_density(self) -> "QuantumState":
        """Promote a ket to the equivalent rank-one density matrix."""
        if self.kind == "density":
            return self
        return QuantumState("density", np.outer(self.data, self.data.conj()), self.space)

    @property
    def dim(self) -> int:
        return self.space.total_dim

    def trace(self) -> float:
        if self.kind == "ket":
            return float(np.vdot(self.data, self.data).real)
        return float(np.trace(self.data).real)

    def validate(self, norm_tol: float = 1e-8, herm_tol: float = 1e-10,
                 pos_tol: float = 1e-8) -> None:
        """Raise ``ValueError`` if the state violates its invariants.

        Kets must be normalized to ``norm_tol``; density matrices must have
        unit trace to ``norm_tol``, be Hermitian to ``herm_tol`` elementwise
        and have smallest eigenvalue above ``-pos_tol``.
        """
        if self.kind == "ket":
            if abs(self.trace() - 1.0) > norm_tol:
                raise ValueError(f"ket norm^2 deviates from 1 by {abs(self.trace() - 1.0):.3e}")
            return
        if abs(self.trace() - 1.0) > norm_tol:
            raise ValueError(f"density trace deviates from 1 by {abs(self.trace() - 1.0):.3e}")
        herm = np.max(np.abs(self.data - self.data.conj().T))
        if herm > herm_tol:
            raise ValueError(f"density Hermiticity residual {herm:.3e} exceeds {herm_tol:.1e}")
        lo = float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T))[0])
        if lo < -pos_tol:
            raise ValueError(f"density smallest eigenvalue {lo:.3e} below -{pos_tol:.1e}")


def expectation(state: QuantumState, op: np.ndarray) -> complex:
    """Expectation value <psi|O|psi> or Tr(rho O).

    Returns the full complex value; for a Hermitian operator the imaginary
    part is floating-point residue and callers normally keep ``.real``.
    """
    op = np.asarray(op)
    if op.shape != (state.dim, state.dim):
        raise ValueError(f"operator shape {op.shape} does not match state dimension {state.dim}")
    if state.kind == "ket":
        return complex(np.vdot(state.data, op @ state.data))
    return complex(np.trace(op @ state.data))


def ground_populations(state: QuantumState) -> tuple[float, float, float]:
    """Populations (P_a, P_b, P_e) summed over all photon numbers."""
    fdim = state.space.fock_dim
    if state.kind == "ket":
        probs = np.abs(state.data.reshape(ATOM_DIM, fdim)) ** 2
        pa, pb, pe = probs.sum(axis=1)
    else:
        diag = np.diag(state.data).real.reshape(ATOM_DIM, fdim)
        pa, pb, pe = diag.sum(axis=1)
    return float(pa), float(pb), float(pe)
