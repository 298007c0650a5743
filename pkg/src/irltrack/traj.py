"""Joint-space reference trajectories.

All angles are radians and all times seconds; config ingestion converts
from degrees.  `sample` is pure and total on [0, duration].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

KINDS = ("exp_grow_decay", "linear_ramp", "step_hold", "sinusoid", "piecewise_samples")


@dataclass(frozen=True)
class TrajectorySpec:
    """One reference trajectory.  Fields are used per `kind`:

    exp_grow_decay     amplitude, time_constant  (grow for three time
                       constants, then decay with the same constant)
    linear_ramp        slope (rad/s)
    step_hold          step_time, step_value (right-continuous at the step)
    sinusoid           amplitude, frequency (Hz), phase (rad)
    piecewise_samples  samples: ((t, angle), ...) linearly interpolated
    """

    kind: str
    duration: float
    offset: float = 0.0
    amplitude: float = 0.0
    time_constant: float = 0.0
    slope: float = 0.0
    step_time: float = 0.0
    step_value: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    samples: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}; expected one of {KINDS}")
        if not (self.duration > 0.0):
            raise ValueError("trajectory duration must be positive")
        if self.kind == "exp_grow_decay" and not (self.time_constant > 0.0):
            raise ValueError("exp_grow_decay needs a positive time_constant")
        if self.kind == "sinusoid" and not (self.frequency > 0.0):
            raise ValueError("sinusoid needs a positive frequency")
        if self.kind == "piecewise_samples":
            if not self.samples or len(self.samples) < 2:
                raise ValueError("piecewise_samples needs at least two (t, angle) knots")
            ts = [t for t, _ in self.samples]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("piecewise_samples knots must be strictly increasing in t")


def sample(spec: TrajectorySpec, t: float) -> float:
    """Reference angle at time t (radians); t must lie in [0, duration]."""
    if not (0.0 <= t <= spec.duration):
        raise ValueError(f"t={t} outside trajectory domain [0, {spec.duration}]")
    if spec.kind == "exp_grow_decay":
        tau = spec.time_constant
        t_peak = 3.0 * tau
        if t <= t_peak:
            return spec.offset + spec.amplitude * (1.0 - math.exp(-t / tau))
        peak = spec.amplitude * (1.0 - math.exp(-3.0))
        return spec.offset + peak * math.exp(-(t - t_peak) / tau)
    if spec.kind == "linear_ramp":
        return spec.offset + spec.slope * t
    if spec.kind == "step_hold":
        # Right-continuous: the new target appears at the step instant.
        if t >= spec.step_time:
            return spec.offset + spec.step_value
        return spec.offset
    if spec.kind == "sinusoid":
        return spec.offset + spec.amplitude * math.sin(2.0 * math.pi * spec.frequency * t + spec.phase)
    knots_t = np.array([p[0] for p in spec.samples])
    knots_v = np.array([p[1] for p in spec.samples])
    return float(np.interp(t, knots_t, knots_v))


def sample_array(spec: TrajectorySpec, ts: Sequence[float]) -> np.ndarray:
    return np.array([sample(spec, float(t)) for t in ts])
