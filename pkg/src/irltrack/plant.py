"""Simulated joint plant.

Each joint is a gravity-loaded, friction-damped pendulum whose inertia and
gravity torque grow with the carried payload, plus an optional acceleration
coupling between a designated pair of joints (shoulder/elbow by default).
A zero-order-hold encoder model decimates sensing to the configured rate
and quantizes to encoder counts.  A scalar discrete LTI plant is provided
for controller-vs-oracle tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is an accelerator, not a dependency
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn

GRAVITY = 9.81
LB_TO_KG = 0.45359237
ENCODER_COUNTS_PER_TURN = 3_686_400

PAYLOAD_KINDS = ("none", "constant", "step", "ramp")
_PAYLOAD_CODE = {k: i for i, k in enumerate(PAYLOAD_KINDS)}


class PlantDivergenceError(RuntimeError):
    """Integration produced a non-finite plant state."""


@dataclass(frozen=True)
class JointParams:
    """Physical parameters of one simulated joint.

    gravity_phase is the encoder angle at which the joint hangs at its
    gravity equilibrium (axis-orientation offset): the gravity torque is
    -G * sin(theta - gravity_phase).
    """

    inertia_base: float  # kg m^2, payload-free inertia about the axis
    link_mass: float  # kg
    link_length: float  # m, lever arm for payload inertia and gravity
    viscous_friction: float  # N m s / rad
    actuator_gain: float  # N m per actuation unit
    coupling_gain: float = 0.0  # N m s^2 on the neighbor's angular acceleration
    gravity_phase: float = 0.0  # rad
    actuator_sign: int = 1  # mounting direction: torque acts on +/- encoder angle

    def __post_init__(self) -> None:
        if not (self.inertia_base > 0.0):
            raise ValueError("inertia_base must be positive")
        if not (self.actuator_gain > 0.0):
            raise ValueError("actuator_gain must be positive")
        if not (0.0 <= self.coupling_gain <= 0.5):
            raise ValueError("coupling_gain must lie in [0, 0.5]")
        if self.actuator_sign not in (1, -1):
            raise ValueError("actuator_sign must be +1 or -1")
        if self.link_mass < 0.0 or self.link_length <= 0.0 or self.viscous_friction < 0.0:
            raise ValueError("link_mass/viscous_friction must be >= 0 and link_length > 0")

    @property
    def gravity_gain(self) -> float:
        """Payload-free gravity torque coefficient m*g*l (N m)."""
        return self.link_mass * GRAVITY * self.link_length

    def inertia(self, payload_kg: float) -> float:
        return self.inertia_base + payload_kg * self.link_length**2

    def gravity_coeff(self, payload_kg: float) -> float:
        return (self.link_mass + payload_kg) * GRAVITY * self.link_length


@dataclass(frozen=True)
class PayloadSchedule:
    """Payload mass carried by the arm as a function of time."""

    kind: str = "none"
    mass: float = 0.0  # kg
    step_time: float = 0.0
    ramp_start: float = 0.0
    ramp_end: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in PAYLOAD_KINDS:
            raise ValueError(f"unknown payload kind {self.kind!r}; expected one of {PAYLOAD_KINDS}")
        if self.mass < 0.0:
            raise ValueError("payload mass must be >= 0")
        if self.kind == "ramp" and not (self.ramp_start < self.ramp_end):
            raise ValueError("ramp schedule needs ramp_start < ramp_end")

    def mass_at(self, t: float) -> float:
        return _payload_at(
            _PAYLOAD_CODE[self.kind], self.mass, self.step_time, self.ramp_start, self.ramp_end, t
        )


@dataclass(frozen=True)
class PlantState:
    """Snapshot of the simulated arm (arrays are copies, safe to keep)."""

    theta: np.ndarray  # rad per joint
    omega: np.ndarray  # rad/s per joint
    t: float
    payload_mass: float  # kg


@njit(cache=True)
def _payload_at(kind: int, mass: float, step_time: float, ramp_start: float, ramp_end: float, t: float) -> float:
    if kind == 0:
        return 0.0
    if kind == 1:
        return mass
    if kind == 2:
        return mass if t >= step_time else 0.0
    if t <= ramp_start:
        return 0.0
    if t >= ramp_end:
        return mass
    return mass * (t - ramp_start) / (ramp_end - ramp_start)


@njit(cache=True)
def _accels(theta, omega, u, t, inertia_base, link_mass, link_length, friction, gain,
            coupling, phase, sign, pair_j, pair_k, pay_kind, pay_mass, pay_t0, pay_t1, pay_t2):
    mp = _payload_at(pay_kind, pay_mass, pay_t0, pay_t1, pay_t2, t)
    n = theta.shape[0]
    acc = np.empty(n)
    inertia = np.empty(n)
    for i in range(n):
        ji = inertia_base[i] + mp * link_length[i] * link_length[i]
        gi = (link_mass[i] + mp) * GRAVITY * link_length[i]
        acc[i] = (sign[i] * gain[i] * u[i] - friction[i] * omega[i]
                  - gi * math.sin(theta[i] - phase[i])) / ji
        inertia[i] = ji
    if pair_j >= 0:
        # J_j tdd_j = ... + c_j tdd_k  (and symmetrically), solved as a 2x2 system
        aj = coupling[pair_j] / inertia[pair_j]
        ak = coupling[pair_k] / inertia[pair_k]
        den = 1.0 - aj * ak
        bj = acc[pair_j]
        bk = acc[pair_k]
        acc[pair_j] = (bj + aj * bk) / den
        acc[pair_k] = (bk + ak * bj) / den
    return acc


@njit(cache=True)
def _rk4_chunk(theta, omega, t0, u, n_steps, dt, inertia_base, link_mass, link_length,
               friction, gain, coupling, phase, sign, pair_j, pair_k,
               pay_kind, pay_mass, pay_t0, pay_t1, pay_t2):
    th = theta.copy()
    om = omega.copy()
    for s in range(n_steps):
        t = t0 + s * dt
        k1o = _accels(th, om, u, t, inertia_base, link_mass, link_length, friction, gain,
                      coupling, phase, sign, pair_j, pair_k, pay_kind, pay_mass, pay_t0, pay_t1, pay_t2)
        th2 = th + 0.5 * dt * om
        om2 = om + 0.5 * dt * k1o
        k2o = _accels(th2, om2, u, t + 0.5 * dt, inertia_base, link_mass, link_length, friction,
                      gain, coupling, phase, sign, pair_j, pair_k, pay_kind, pay_mass, pay_t0, pay_t1, pay_t2)
        th3 = th + 0.5 * dt * om2
        om3 = om + 0.5 * dt * k2o
        k3o = _accels(th3, om3, u, t + 0.5 * dt, inertia_base, link_mass, link_length, friction,
                      gain, coupling, phase, sign, pair_j, pair_k, pay_kind, pay_mass, pay_t0, pay_t1, pay_t2)
        th4 = th + dt * om3
        om4 = om + dt * k3o
        k4o = _accels(th4, om4, u, t + dt, inertia_base, link_mass, link_length, friction,
                      gain, coupling, phase, sign, pair_j, pair_k, pay_kind, pay_mass, pay_t0, pay_t1, pay_t2)
        th = th + (dt / 6.0) * (om + 2.0 * om2 + 2.0 * om3 + om4)
        om = om + (dt / 6.0) * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
    return th, om


def _pack_params(joints: Sequence[JointParams]):
    return (
        np.array([j.inertia_base for j in joints]),
        np.array([j.link_mass for j in joints]),
        np.array([j.link_length for j in joints]),
        np.array([j.viscous_friction for j in joints]),
        np.array([j.actuator_gain for j in joints]),
        np.array([j.coupling_gain for j in joints]),
        np.array([j.gravity_phase for j in joints]),
        np.array([float(j.actuator_sign) for j in joints]),
    )


def step_dynamics(
    state: PlantState,
    u: np.ndarray,
    dt_inner: float,
    joints: Sequence[JointParams],
    schedule: PayloadSchedule,
    coupled_pair: Optional[Tuple[int, int]] = None,
) -> PlantState:
    """Advance the coupled joint dynamics by one RK4 step of dt_inner."""
    packed = _pack_params(joints)
    pj, pk = coupled_pair if coupled_pair is not None else (-1, -1)
    code = _PAYLOAD_CODE[schedule.kind]
    th, om = _rk4_chunk(
        np.asarray(state.theta, dtype=float), np.asarray(state.omega, dtype=float),
        state.t, np.asarray(u, dtype=float), 1, dt_inner, *packed, pj, pk,
        code, schedule.mass, schedule.step_time, schedule.ramp_start, schedule.ramp_end,
    )
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(om))):
        raise PlantDivergenceError(f"non-finite joint state at t={state.t + dt_inner:.3f}")
    t_new = state.t + dt_inner
    return PlantState(theta=th, omega=om, t=t_new, payload_mass=schedule.mass_at(t_new))


def quantize_angle(theta: np.ndarray, counts_per_turn: int = ENCODER_COUNTS_PER_TURN) -> np.ndarray:
    """Floor the angle to the nearest encoder count below."""
    step = 2.0 * math.pi / counts_per_turn
    return np.floor(np.asarray(theta, dtype=float) / step) * step


class ArmPlant:
    """Single-owner simulated arm with ZOH/quantized sensing.

    `actuate` holds the given per-joint actuation constant over the interval
    and integrates at dt_inner; the encoder latch refreshes at the sensor
    rate, so `observe` is constant between sensor ticks.
    """

    def __init__(
        self,
        joints: Sequence[JointParams],
        theta0: np.ndarray,
        schedule: PayloadSchedule = PayloadSchedule(),
        dt_inner: float = 1e-3,
        sensor_rate: float = 50.0,
        counts_per_turn: int = ENCODER_COUNTS_PER_TURN,
        coupled_pair: Optional[Tuple[int, int]] = None,
    ):
        self.joints = tuple(joints)
        self.n_joints = len(self.joints)
        theta0 = np.asarray(theta0, dtype=float)
        if theta0.shape != (self.n_joints,):
            raise ValueError(f"theta0 must have shape ({self.n_joints},)")
        if dt_inner <= 0.0:
            raise ValueError("dt_inner must be positive")
        ticks = 1.0 / (sensor_rate * dt_inner)
        if abs(ticks - round(ticks)) > 1e-9 or round(ticks) < 1:
            raise ValueError("sensor period must be an integer multiple of dt_inner")
        if coupled_pair is None and self.n_joints >= 3:
            coupled_pair = (1, 2)  # shoulder and elbow share a parallel axis
        if coupled_pair is not None:
            j, k = coupled_pair
            if not (0 <= j < self.n_joints and 0 <= k < self.n_joints and j != k):
                raise ValueError("coupled_pair indices out of range")
        self.schedule = schedule
        self.dt_inner = float(dt_inner)
        self.sensor_rate = float(sensor_rate)
        self.counts_per_turn = counts_per_turn
        self._steps_per_tick = int(round(ticks))
        self._pair = coupled_pair if coupled_pair is not None else (-1, -1)
        self._packed = _pack_params(self.joints)
        self._theta = theta0.copy()
        self._omega = np.zeros(self.n_joints)
        self._n_inner = 0
        self._sensor_theta = theta0.copy()

    @property
    def t(self) -> float:
        return self._n_inner * self.dt_inner

    @property
    def payload_mass(self) -> float:
        return self.schedule.mass_at(self.t)

    def state(self) -> PlantState:
        return PlantState(self._theta.copy(), self._omega.copy(), self.t, self.payload_mass)

    def actuate(self, u: np.ndarray, duration: float) -> None:
        """Apply constant actuation over [t, t + duration]."""
        u = np.broadcast_to(np.asarray(u, dtype=float), (self.n_joints,)).copy()
        n_steps = int(round(duration / self.dt_inner))
        if abs(n_steps * self.dt_inner - duration) > 1e-9 or n_steps < 1:
            raise ValueError("duration must be an integer multiple of dt_inner")
        if self.dt_inner > duration / 10.0 + 1e-12:
            raise ValueError("dt_inner must be <= duration/10")
        code = _PAYLOAD_CODE[self.schedule.kind]
        sched = (code, self.schedule.mass, self.schedule.step_time,
                 self.schedule.ramp_start, self.schedule.ramp_end)
        done = 0
        while done < n_steps:
            to_tick = self._steps_per_tick - (self._n_inner % self._steps_per_tick)
            k = min(to_tick, n_steps - done)
            self._theta, self._omega = _rk4_chunk(
                self._theta, self._omega, self.t, u, k, self.dt_inner,
                *self._packed, self._pair[0], self._pair[1], *sched,
            )
            self._n_inner += k
            done += k
            if self._n_inner % self._steps_per_tick == 0:
                self._sensor_theta = self._theta.copy()
        if not (np.all(np.isfinite(self._theta)) and np.all(np.isfinite(self._omega))):
            raise PlantDivergenceError(f"non-finite joint state at t={self.t:.3f}")

    def observe(self) -> np.ndarray:
        """Latest latched encoder reading, floor-quantized to counts."""
        return quantize_angle(self._sensor_theta, self.counts_per_turn)


class ScalarLinearPlant:
    """Discrete first-order LTI plant y+ = a*y + b*u, one step per actuation.

    Sensing is exact (no quantization or decimation); this is the ground
    truth vehicle for comparing the learned gains against exact value
    iteration.
    """

    def __init__(self, a: float, b: float, y0: float = 0.0):
        if b == 0.0:
            raise ValueError("control gain b must be nonzero")
        self.a = float(a)
        self.b = float(b)
        self.y = float(y0)
        self.t = 0.0
        self.n_joints = 1
        self.payload_mass = 0.0

    def actuate(self, u: np.ndarray, duration: float) -> None:
        self.y = self.a * self.y + self.b * float(np.asarray(u).reshape(-1)[0])
        self.t += duration
        if not math.isfinite(self.y):
            raise PlantDivergenceError(f"non-finite output at t={self.t:.3f}")

    def observe(self) -> np.ndarray:
        return np.array([self.y])
