"""Numerical laboratory for reversible light-atom state transfer in cavity QED.

A three-level atom strongly coupled to a lossy optical cavity, driven by
timed classical pulses: master-equation and quantum-trajectory dynamics,
the four protocol experiments (photon generation, pulse absorption,
arrival-time sweep, phase-fringe scan), and the analysis that turns raw
tracks into transfer probabilities, ratios, and fringe visibilities.
"""

__version__ = "0.1.0"

from .analysis import (FringeFit, PartitionResult, emit_csv, fit_visibility,
                       overlap_visibility, partition_coherent, photon_bookkeeping,
                       window_count)
from .dynamics import (ConstantDrive, SystemOps, SystemParams, TimeSeries,
                       hamiltonian_at, integrate_master, lindblad_rhs,
                       validate_analytic)
from .hilbert import (QuantumState, SpaceDescriptor, annihilation, atomic_op,
                      basis_ket, build_space, expectation, ground_populations,
                      identity, number_op)
from .protocol import (AbsorptionRecord, CalibrationResult, EmissionRecord,
                       FringeCurve, FringeResult, SweepResult, calibrate_input,
                       efficiency_budget, fringe_experiment, overlap_estimate,
                       run_absorption, run_fringe, run_single_photon, sweep_arrival)
from .pulses import PulseSchedule, make_schedule
from .trajectories import TrajectoryEnsemble, TrajectoryRecord, run_trajectories

__all__ = [
    "__version__",
    "AbsorptionRecord", "CalibrationResult", "ConstantDrive", "EmissionRecord",
    "FringeCurve", "FringeFit", "FringeResult", "PartitionResult", "PulseSchedule",
    "QuantumState", "SpaceDescriptor", "SweepResult", "SystemOps", "SystemParams",
    "TimeSeries", "TrajectoryEnsemble", "TrajectoryRecord",
    "annihilation", "atomic_op", "basis_ket", "build_space", "calibrate_input",
    "efficiency_budget", "emit_csv", "expectation", "fit_visibility",
    "fringe_experiment", "ground_populations", "hamiltonian_at", "identity",
    "integrate_master", "lindblad_rhs", "make_schedule", "number_op",
    "overlap_estimate", "overlap_visibility", "partition_coherent",
    "photon_bookkeeping", "run_absorption", "run_fringe", "run_single_photon",
    "run_trajectories", "sweep_arrival", "validate_analytic", "window_count",
]
