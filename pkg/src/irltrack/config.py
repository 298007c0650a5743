"""Experiment configuration: strict TOML schema, unit conversion, round-trip.

Human-facing keys accept degrees (`*_deg`) and pounds (`mass_lb`); the exact
counterparts (`*_rad`, `mass_kg`) are what the serializer emits so that a
load -> dump -> load round trip reproduces the configuration bit-for-bit.
Unknown keys are rejected with their full path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - 3.10 path
    import tomli as tomllib

from .core import ActorWeights, CostWeights, CriticWeights, LearningRates, UPDATE_MODES
from .homfac import HomfacParams
from .plant import LB_TO_KG, JointParams, PayloadSchedule
from .traj import TrajectorySpec

log = logging.getLogger(__name__)

JOINT_NAMES_4 = ("base", "shoulder", "elbow", "wrist")


class ConfigError(ValueError):
    """Schema violation; the message names the offending key."""


@dataclass(frozen=True)
class JointConfig:
    name: str
    theta0: float  # rad
    u_max: float
    params: JointParams
    traj: TrajectorySpec
    cost: CostWeights
    critic0: CriticWeights

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JointConfig):
            return NotImplemented
        return (self.name == other.name and self.theta0 == other.theta0
                and self.u_max == other.u_max and self.params == other.params
                and self.traj == other.traj and self.cost == other.cost
                and self.critic0 == other.critic0)


@dataclass(frozen=True)
class NoiseConfig:
    sigma: float  # std, from Table-style variance at ingestion
    window_fraction: float
    mode: str = "weights"


@dataclass(frozen=True)
class HomfacConfig:
    rate_hz: float
    alpha: Tuple[float, ...]
    eta: float
    lam: float
    mu: float
    rho: float
    phi0: Tuple[float, ...]  # one per joint
    epsilon_reset: float

    def params_for(self, joint_index: int) -> HomfacParams:
        return HomfacParams(alpha=self.alpha, eta=self.eta, lam=self.lam,
                            mu=self.mu, rho=self.rho,
                            phi0=self.phi0[joint_index],
                            epsilon_reset=self.epsilon_reset)


@dataclass(frozen=True)
class ExperimentConfig:
    id: int
    controller: str  # irl | homfac
    seed: int
    nu: float
    steps: int
    sensor_hz: float
    dt_inner: float
    rates: LearningRates
    residual_mode: str
    conv_sigma: float
    conv_window: int
    actor_rule: str  # greedy_plus_noise | explicit
    actor_noise_std: float
    noisy_joints: Tuple[str, ...]
    explicit_gains: Optional[Tuple[Tuple[float, float, float], ...]]
    payload: PayloadSchedule
    noise: Optional[NoiseConfig]
    homfac: Optional[HomfacConfig]
    joints: Tuple[JointConfig, ...] = field(default_factory=tuple)

    @property
    def duration(self) -> float:
        return self.steps * self.nu

    def initial_actor(self, joint_index: int, rng: np.random.Generator) -> ActorWeights:
        """Apply the configured initialization rule for one joint."""
        from .core import greedy_gains

        jc = self.joints[joint_index]
        if self.actor_rule == "explicit":
            return ActorWeights(*self.explicit_gains[joint_index])
        base = greedy_gains(jc.critic0).as_array()
        if jc.name in self.noisy_joints and self.actor_noise_std > 0.0:
            base = base + rng.normal(0.0, self.actor_noise_std, size=3)
        return ActorWeights.from_array(base)


# ---------------------------------------------------------------------------
# Strict dict walking
# ---------------------------------------------------------------------------


class _Section:
    """Tracks consumed keys so leftovers can be reported by full path."""

    def __init__(self, data: Dict[str, Any], path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a table")
        self.data = data
        self.path = path
        self.seen: set = set()

    def _label(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def take(self, key: str, kind, required: bool = True, default=None):
        if key not in self.data:
            if required:
                raise ConfigError(f"missing key {self._label(key)!r}")
            return default
        self.seen.add(key)
        value = self.data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind):
            raise ConfigError(
                f"{self._label(key)!r} has type {type(value).__name__}, expected {kind.__name__}"
            )
        return value

    def sub(self, key: str, required: bool = True) -> Optional["_Section"]:
        raw = self.take(key, dict, required=required)
        if raw is None:
            return None
        return _Section(raw, self._label(key))

    def finish(self) -> None:
        unknown = set(self.data) - self.seen
        if unknown:
            name = sorted(unknown)[0]
            raise ConfigError(f"unknown key {self._label(name)!r}")


def _angle(sec: _Section, stem: str, required: bool = True, default: float = 0.0) -> float:
    """Accept `<stem>_deg` or `<stem>_rad` (exactly one)."""
    has_deg = f"{stem}_deg" in sec.data
    has_rad = f"{stem}_rad" in sec.data
    if has_deg and has_rad:
        raise ConfigError(f"{sec.path}.{stem}: give either _deg or _rad, not both")
    if has_rad:
        return float(sec.take(f"{stem}_rad", float))
    if has_deg:
        return math.radians(float(sec.take(f"{stem}_deg", float)))
    if required:
        raise ConfigError(f"missing key '{sec.path}.{stem}_deg'")
    return default


def _matrix(sec: _Section, key: str, shape: Tuple[int, int]) -> np.ndarray:
    rows = sec.take(key, list)
    try:
        m = np.array(rows, dtype=float)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{sec.path}.{key}: not a numeric matrix ({err})")
    if m.shape != shape:
        raise ConfigError(f"{sec.path}.{key}: expected shape {shape}, got {m.shape}")
    return m


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _parse_trajectory(sec: _Section) -> TrajectorySpec:
    kind = sec.take("kind", str)
    duration = sec.take("duration", float)
    kwargs: Dict[str, Any] = {"kind": kind, "duration": duration}
    kwargs["offset"] = _angle(sec, "offset", required=False, default=0.0)
    if kind == "exp_grow_decay":
        kwargs["amplitude"] = _angle(sec, "amplitude")
        kwargs["time_constant"] = sec.take("time_constant", float)
    elif kind == "linear_ramp":
        kwargs["slope"] = _angle(sec, "slope")  # deg/s or rad/s
    elif kind == "step_hold":
        kwargs["step_time"] = sec.take("step_time", float)
        kwargs["step_value"] = _angle(sec, "step_value")
    elif kind == "sinusoid":
        kwargs["amplitude"] = _angle(sec, "amplitude")
        kwargs["frequency"] = sec.take("frequency", float)
        kwargs["phase"] = _angle(sec, "phase", required=False, default=0.0)
    elif kind == "piecewise_samples":
        knots = sec.take("samples_rad", list)
        kwargs["samples"] = tuple((float(t), float(v)) for t, v in knots)
    else:
        raise ConfigError(f"{sec.path}.kind: unknown trajectory kind {kind!r}")
    sec.finish()
    try:
        return TrajectorySpec(**kwargs)
    except ValueError as err:
        raise ConfigError(f"{sec.path}: {err}")


def _parse_payload(sec: Optional[_Section]) -> PayloadSchedule:
    if sec is None:
        return PayloadSchedule()
    kind = sec.take("kind", str)
    has_lb = "mass_lb" in sec.data
    has_kg = "mass_kg" in sec.data
    if has_lb and has_kg:
        raise ConfigError(f"{sec.path}: give either mass_lb or mass_kg, not both")
    mass = 0.0
    if has_lb:
        mass = float(sec.take("mass_lb", float)) * LB_TO_KG
    elif has_kg:
        mass = float(sec.take("mass_kg", float))
    kwargs: Dict[str, Any] = {"kind": kind, "mass": mass}
    if kind == "step":
        kwargs["step_time"] = sec.take("step_time", float)
    if kind == "ramp":
        kwargs["ramp_start"] = sec.take("ramp_start", float)
        kwargs["ramp_end"] = sec.take("ramp_end", float)
    sec.finish()
    try:
        return PayloadSchedule(**kwargs)
    except ValueError as err:
        raise ConfigError(f"{sec.path}: {err}")


def _parse_joint(sec: _Section) -> JointConfig:
    name = sec.take("name", str)
    theta0 = _angle(sec, "theta0")
    u_max = sec.take("u_max", float, required=False, default=1.0)

    p = sec.sub("params")
    params_kwargs = dict(
        inertia_base=p.take("inertia_base", float),
        link_mass=p.take("link_mass", float),
        link_length=p.take("link_length", float),
        viscous_friction=p.take("viscous_friction", float),
        actuator_gain=p.take("actuator_gain", float),
        coupling_gain=p.take("coupling_gain", float, required=False, default=0.0),
        gravity_phase=_angle(p, "gravity_phase", required=False, default=0.0),
        actuator_sign=p.take("actuator_sign", int, required=False, default=1),
    )
    p.finish()
    try:
        params = JointParams(**params_kwargs)
    except ValueError as err:
        raise ConfigError(f"{p.path}: {err}")

    traj = _parse_trajectory(sec.sub("trajectory"))

    c = sec.sub("cost")
    q = _matrix(c, "q", (3, 3))
    r = c.take("r", float)
    c.finish()
    try:
        cost = CostWeights(q, r)
    except ValueError as err:
        raise ConfigError(f"{c.path}.q: {err}")

    k = sec.sub("critic0")
    m = _matrix(k, "m", (4, 4))
    k.finish()
    try:
        critic0 = CriticWeights(m)
    except Exception as err:
        raise ConfigError(f"{k.path}.m: {err}")
    if not critic0.is_positive_definite():
        log.warning("joint %r: initial critic matrix is not positive definite "
                    "(min leading minor %.3e); proceeding as configured",
                    name, min(critic0.leading_minors()))

    sec.finish()
    return JointConfig(name=name, theta0=theta0, u_max=u_max, params=params,
                       traj=traj, cost=cost, critic0=critic0)


def parse_config(raw: Dict[str, Any]) -> ExperimentConfig:
    root = _Section(raw, "")
    exp_id = root.take("id", int)
    controller = root.take("controller", str, required=False, default="irl")
    if controller not in ("irl", "homfac"):
        raise ConfigError(f"'controller' must be irl or homfac, got {controller!r}")
    seed = root.take("seed", int)

    rates_sec = root.sub("rates")
    nu = rates_sec.take("nu", float)
    steps = rates_sec.take("steps", int)
    sensor_hz = rates_sec.take("sensor_hz", float, required=False, default=50.0)
    dt_inner = rates_sec.take("dt_inner", float, required=False, default=1e-3)
    rates_sec.finish()
    if nu <= 0 or steps < 1:
        raise ConfigError("'rates.nu' must be > 0 and 'rates.steps' >= 1")

    ln = root.sub("learning")
    try:
        rates = LearningRates(alpha_c=ln.take("alpha_c", float),
                              alpha_a=ln.take("alpha_a", float))
    except ValueError as err:
        raise ConfigError(f"learning: {err}")
    residual_mode = ln.take("residual_mode", str, required=False, default="signed")
    if residual_mode not in UPDATE_MODES:
        raise ConfigError(f"'learning.residual_mode' must be one of {UPDATE_MODES}")
    ln.finish()

    cv = root.sub("convergence", required=False)
    if cv is not None:
        conv_sigma = cv.take("sigma", float, required=False, default=1e-4)
        conv_window = cv.take("window", int, required=False, default=16)
        cv.finish()
    else:
        conv_sigma, conv_window = 1e-4, 16
    if conv_sigma < 0 or conv_window < 1:
        raise ConfigError("'convergence.sigma' must be >= 0 and window >= 1")

    ai = root.sub("actor_init")
    actor_rule = ai.take("rule", str)
    if actor_rule not in ("greedy_plus_noise", "explicit"):
        raise ConfigError("'actor_init.rule' must be greedy_plus_noise or explicit")
    actor_noise_std = ai.take("noise_std", float, required=False, default=0.0)
    noisy_raw = ai.take("noisy_joints", list, required=False, default=[])
    explicit = ai.take("gains", list, required=False)
    ai.finish()
    explicit_gains = None
    if actor_rule == "explicit":
        if explicit is None:
            raise ConfigError("'actor_init.gains' required for rule=explicit")
        explicit_gains = tuple(tuple(float(v) for v in row) for row in explicit)
        if any(len(row) != 3 for row in explicit_gains):
            raise ConfigError("'actor_init.gains' rows must have 3 entries")

    payload = _parse_payload(root.sub("payload", required=False))

    nz = root.sub("noise", required=False)
    noise = None
    if nz is not None:
        variance = nz.take("variance", float)
        frac = nz.take("window_fraction", float)
        mode = nz.take("mode", str, required=False, default="weights")
        nz.finish()
        if variance < 0 or not (0.0 <= frac <= 1.0):
            raise ConfigError("'noise.variance' must be >= 0 and window_fraction in [0,1]")
        if mode not in ("weights", "actuation"):
            raise ConfigError("'noise.mode' must be weights or actuation")
        noise = NoiseConfig(sigma=math.sqrt(variance), window_fraction=frac, mode=mode)

    hf = root.sub("homfac", required=False)
    homfac = None
    if hf is not None:
        homfac = HomfacConfig(
            rate_hz=hf.take("rate_hz", float, required=False, default=5.0),
            alpha=tuple(float(a) for a in hf.take("alpha", list)),
            eta=hf.take("eta", float),
            lam=hf.take("lambda", float),
            mu=hf.take("mu", float),
            rho=hf.take("rho", float),
            phi0=tuple(float(v) for v in hf.take("phi0", list)),
            epsilon_reset=hf.take("epsilon_reset", float, required=False, default=1e-5),
        )
        hf.finish()

    joints_raw = root.take("joints", list)
    if not joints_raw:
        raise ConfigError("'joints' must have at least one entry")
    joints = tuple(_parse_joint(_Section(j, f"joints[{i}]"))
                   for i, j in enumerate(joints_raw))
    root.finish()

    if exp_id in (1, 2, 3, 4) and len(joints) != 4:
        raise ConfigError(f"experiment {exp_id} controls four joints, config has {len(joints)}")
    if exp_id == 5 and len(joints) != 1:
        raise ConfigError(f"experiment 5 controls a single joint, config has {len(joints)}")
    if not (0 <= exp_id <= 5):
        raise ConfigError("'id' must be 0 (custom scenario) or an experiment number 1-5")
    for jc in joints:
        if jc.traj.duration + 1e-9 < steps * nu:
            raise ConfigError(
                f"joint {jc.name!r}: trajectory duration {jc.traj.duration} shorter "
                f"than the episode {steps * nu}")
    if homfac is not None and len(homfac.phi0) < len(joints):
        raise ConfigError("'homfac.phi0' needs one entry per joint")
    if controller == "homfac" and homfac is None:
        raise ConfigError("controller=homfac requires a [homfac] table")
    if explicit_gains is not None and len(explicit_gains) != len(joints):
        raise ConfigError("'actor_init.gains' needs one row per joint")
    unknown_noisy = set(noisy_raw) - {j.name for j in joints}
    if unknown_noisy:
        raise ConfigError(f"'actor_init.noisy_joints' names unknown joint {sorted(unknown_noisy)[0]!r}")

    return ExperimentConfig(
        id=exp_id, controller=controller, seed=seed, nu=nu, steps=steps,
        sensor_hz=sensor_hz, dt_inner=dt_inner, rates=rates,
        residual_mode=residual_mode, conv_sigma=conv_sigma, conv_window=conv_window,
        actor_rule=actor_rule, actor_noise_std=actor_noise_std,
        noisy_joints=tuple(noisy_raw), explicit_gains=explicit_gains,
        payload=payload, noise=noise, homfac=homfac, joints=joints,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Serialization (exact units so load -> dump -> load is the identity)
# ---------------------------------------------------------------------------


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _emit_table(lines: List[str], header: str, table: Dict[str, Any], array_of_tables=False):
    plain = {k: v for k, v in table.items() if not isinstance(v, dict)}
    subs = {k: v for k, v in table.items() if isinstance(v, dict)}
    if header:
        lines.append(f"[[{header}]]" if array_of_tables else f"[{header}]")
    for k, v in plain.items():
        lines.append(f"{k} = {_toml_value(v)}")
    lines.append("")
    for k, v in subs.items():
        _emit_table(lines, f"{header}.{k}" if header else k, v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize to TOML text using the exact (rad/kg) key spellings."""
    top: Dict[str, Any] = {
        "id": cfg.id,
        "controller": cfg.controller,
        "seed": cfg.seed,
    }
    rates = {"nu": cfg.nu, "steps": cfg.steps, "sensor_hz": cfg.sensor_hz,
             "dt_inner": cfg.dt_inner}
    learning = {"alpha_c": cfg.rates.alpha_c, "alpha_a": cfg.rates.alpha_a,
                "residual_mode": cfg.residual_mode}
    convergence = {"sigma": cfg.conv_sigma, "window": cfg.conv_window}
    actor_init: Dict[str, Any] = {"rule": cfg.actor_rule, "noise_std": cfg.actor_noise_std,
                                  "noisy_joints": list(cfg.noisy_joints)}
    if cfg.explicit_gains is not None:
        actor_init["gains"] = [list(row) for row in cfg.explicit_gains]
    payload: Dict[str, Any] = {"kind": cfg.payload.kind, "mass_kg": cfg.payload.mass}
    if cfg.payload.kind == "step":
        payload["step_time"] = cfg.payload.step_time
    if cfg.payload.kind == "ramp":
        payload["ramp_start"] = cfg.payload.ramp_start
        payload["ramp_end"] = cfg.payload.ramp_end

    lines: List[str] = []
    for k, v in top.items():
        lines.append(f"{k} = {_toml_value(v)}")
    lines.append("")
    _emit_table(lines, "rates", rates)
    _emit_table(lines, "learning", learning)
    _emit_table(lines, "convergence", convergence)
    _emit_table(lines, "actor_init", actor_init)
    _emit_table(lines, "payload", payload)
    if cfg.noise is not None:
        _emit_table(lines, "noise", {
            "variance": cfg.noise.sigma ** 2,
            "window_fraction": cfg.noise.window_fraction,
            "mode": cfg.noise.mode,
        })
    if cfg.homfac is not None:
        _emit_table(lines, "homfac", {
            "rate_hz": cfg.homfac.rate_hz,
            "alpha": list(cfg.homfac.alpha),
            "eta": cfg.homfac.eta,
            "lambda": cfg.homfac.lam,
            "mu": cfg.homfac.mu,
            "rho": cfg.homfac.rho,
            "phi0": list(cfg.homfac.phi0),
            "epsilon_reset": cfg.homfac.epsilon_reset,
        })
    for jc in cfg.joints:
        traj: Dict[str, Any] = {"kind": jc.traj.kind, "duration": jc.traj.duration,
                                "offset_rad": jc.traj.offset}
        if jc.traj.kind == "exp_grow_decay":
            traj["amplitude_rad"] = jc.traj.amplitude
            traj["time_constant"] = jc.traj.time_constant
        elif jc.traj.kind == "linear_ramp":
            traj["slope_rad"] = jc.traj.slope
        elif jc.traj.kind == "step_hold":
            traj["step_time"] = jc.traj.step_time
            traj["step_value_rad"] = jc.traj.step_value
        elif jc.traj.kind == "sinusoid":
            traj["amplitude_rad"] = jc.traj.amplitude
            traj["frequency"] = jc.traj.frequency
            traj["phase_rad"] = jc.traj.phase
        elif jc.traj.kind == "piecewise_samples":
            traj["samples_rad"] = [list(p) for p in jc.traj.samples]
        joint_table = {
            "name": jc.name,
            "theta0_rad": jc.theta0,
            "u_max": jc.u_max,
            "params": {
                "inertia_base": jc.params.inertia_base,
                "link_mass": jc.params.link_mass,
                "link_length": jc.params.link_length,
                "viscous_friction": jc.params.viscous_friction,
                "actuator_gain": jc.params.actuator_gain,
                "coupling_gain": jc.params.coupling_gain,
                "gravity_phase_rad": jc.params.gravity_phase,
                "actuator_sign": jc.params.actuator_sign,
            },
            "trajectory": traj,
            "cost": {"q": [list(row) for row in jc.cost.q], "r": jc.cost.r},
            "critic0": {"m": [list(row) for row in jc.critic0.m]},
        }
        _emit_table(lines, "joints", {k: v for k, v in joint_table.items()
                                      if not isinstance(v, dict)}, array_of_tables=True)
        for key in ("params", "trajectory", "cost", "critic0"):
            _emit_table(lines, f"joints.{key}", joint_table[key])
    return "\n".join(lines)
