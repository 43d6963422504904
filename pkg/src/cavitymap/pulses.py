"""Pulse envelopes for the four-field transfer protocol.

The protocol plays two classical Raman pulses (Omega_1, Omega_2) against
two cavity-drive pulses (lambda_1, lambda_2) on a common clock:

    t = 0          falling edge of Omega_1 starts
    t = t1         center of the lambda_1 pulse
    t = delta_t    rising edge of Omega_2 starts
    t ~ delta_t + edge_time/2   center of the lambda_2 pulse

Omega edges are raised-cosine ramps of duration ``edge_time``; lambda
pulses are Gaussian with ``lambda_width`` the FWHM of the amplitude
envelope |lambda(t)|.  Any pulse can be toggled independently.  The
relative phase ``theta`` is carried by lambda_2 only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

from .errors import ScheduleWarning

TWO_PI = 2.0 * math.pi
_LN2 = math.log(2.0)


def rise(x: float) -> float:
    """Raised-cosine ramp 0 -> 1 on x in [0, 1], clamped outside."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    return math.sin(0.5 * math.pi * x) ** 2


def fall(x: float) -> float:
    """Raised-cosine ramp 1 -> 0 on x in [0, 1], clamped outside."""
    return 1.0 - rise(x)


def gaussian(t: float, center: float, fwhm: float) -> float:
    """Unit-peak Gaussian with the given full width at half maximum."""
    u = (t - center) / fwhm
    arg = -4.0 * _LN2 * u * u
    if arg < -700.0:
        return 0.0
    return math.exp(arg)


@dataclass(frozen=True)
class PulseSchedule:
    """Callable envelopes Omega(t) and lambda(t) for one protocol run.

    Attributes
    ----------
    omega1_on, omega2_on, lambda1_on, lambda2_on : bool
        Independent toggles for the four pulses.
    t1 : float
        Arrival time of lambda_1 relative to the Omega_1 falling edge (s).
    delta_t : float
        Delay between the Omega_1 falling edge and the Omega_2 rising
        edge (s).
    theta : float
        Phase of lambda_2 relative to lambda_1 (rad).
    omega_max : float
        Peak Rabi frequency of both Omega pulses (rad/s).
    lambda_peak : complex
        Peak cavity-drive amplitude (rad/s), normally set by input
        calibration.
    edge_time : float
        Duration of each Omega edge (s).
    lambda_width : float
        FWHM of the |lambda(t)| envelope (s).
    lambda2_center : float or None
        Center of lambda_2; defaults to the middle of the Omega_2 rising
        edge so the two overlap.
    lambda2_scale : float
        Amplitude of lambda_2 relative to lambda_1.
    """

    omega1_on: bool = False
    omega2_on: bool = False
    lambda1_on: bool = False
    lambda2_on: bool = False
    t1: float = 0.0
    delta_t: float = 1e-6
    theta: float = 0.0
    omega_max: float = TWO_PI * 20.8e6
    lambda_peak: complex = 0j
    edge_time: float = 100e-9
    lambda_width: float = 150e-9
    lambda2_center: float | None = None
    lambda2_scale: float = 1.0

    @property
    def lambda2_time(self) -> float:
        if self.lambda2_center is not None:
            return self.lambda2_center
        return self.delta_t + 0.5 * self.edge_time

    def omega(self, t: float) -> float:
        """Total classical Rabi frequency at time t (rad/s, >= 0)."""
        val = 0.0
        if self.omega1_on:
            # Omega_1 is treated as already on at any simulated start time;
            # an atom in either ground state is stationary under it alone.
            val += self.omega_max * fall(t / self.edge_time)
        if self.omega2_on:
            val += self.omega_max * rise((t - self.delta_t) / self.edge_time)
        return val

    def lam(self, t: float) -> complex:
        """Complex cavity-drive amplitude at time t (rad/s)."""
        val = 0j
        if self.lambda1_on:
            val += self.lambda_peak * gaussian(t, self.t1, self.lambda_width)
        if self.lambda2_on:
            amp = self.lambda2_scale * self.lambda_peak * gaussian(t, self.lambda2_time, self.lambda_width)
            val += amp * complex(math.cos(self.theta), math.sin(self.theta))
        return val

    def span(self, pad: float = 0.0) -> tuple[float, float]:
        """Smallest interval containing all enabled pulse supports.

        Gaussian supports are cut at 4 FWHM where the envelope is below
        1e-19 of its peak.  ``pad`` widens the interval on both sides.
        """
        starts, ends = [], []
        if self.omega1_on:
            starts.append(-2.0 * self.edge_time)
            ends.append(self.edge_time)
        if self.omega2_on:
            starts.append(self.delta_t)
            ends.append(self.delta_t + self.edge_time)
        if self.lambda1_on:
            starts.append(self.t1 - 4.0 * self.lambda_width)
            ends.append(self.t1 + 4.0 * self.lambda_width)
        if self.lambda2_on:
            starts.append(self.lambda2_time - 4.0 * self.lambda_width)
            ends.append(self.lambda2_time + 4.0 * self.lambda_width)
        if not starts:
            starts, ends = [0.0], [0.0]
        return min(starts) - pad, max(ends) + pad

    def with_(self, **changes) -> "PulseSchedule":
        return replace(self, **changes)


def make_schedule(**config) -> PulseSchedule:
    """Build a validated schedule from keyword configuration.

    Accepts every ``PulseSchedule`` field.  Raises ``ValueError`` on
    non-finite timings or a non-positive edge time, and warns when the
    lambda_2 pulse does not overlap the Omega_2 rising edge (the beat
    experiment then has no interference partner).
    """
    sched = PulseSchedule(**config)
    for name in ("t1", "delta_t", "theta", "omega_max", "edge_time", "lambda_width"):
        if not math.isfinite(getattr(sched, name)):
            raise ValueError(f"schedule field {name} must be finite")
    if sched.edge_time <= 0:
        raise ValueError("edge_time must be positive")
    if sched.lambda_width <= 0:
        raise ValueError("lambda_width must be positive")
    if sched.omega_max < 0:
        raise ValueError("omega_max must be non-negative")
    if sched.lambda2_on and sched.omega2_on:
        rise_lo, rise_hi = sched.delta_t, sched.delta_t + sched.edge_time
        lam_lo = sched.lambda2_time - 2.0 * sched.lambda_width
        lam_hi = sched.lambda2_time + 2.0 * sched.lambda_width
        if lam_hi < rise_lo or lam_lo > rise_hi:
            warnings.warn(
                "lambda_2 support does not overlap the Omega_2 rising edge",
                ScheduleWarning, stacklevel=2,
            )
    return sched
