"""Experiment orchestration.

Builds the simulated arm and per-joint controllers from a declarative
config, runs the lockstep episode (or the slower-rate baseline controller),
computes tracking metrics, and persists one CSV per joint plus a metrics
summary.  All runs are deterministic under the configured seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig, JointConfig
from .core import ActorWeights
from .homfac import HomfacDivergenceError, HomfacState, homfac_step
from .loop import ControllerState, JointSetup, NoiseWindow, StepRecord, run_lockstep
from .plant import ArmPlant, PlantDivergenceError
from .traj import sample

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "theta", "theta_d", "epsilon", "eta", "u",
               "S_hat", "S_tilde", "w0", "w_nu", "w_2nu", "critic_fro", "payload_kg")

# |error| band for settling: 2% of the reference span, floored for flat refs.
SETTLE_BAND_FRACTION = 0.02
SETTLE_BAND_FLOOR = 0.0087  # rad (~0.5 deg)


@dataclass
class JointMetrics:
    joint: str
    overshoot_pct: Optional[float]  # None when the trajectory has no step
    settling_time: Optional[float]  # None when unsettled
    rms_error: float
    max_abs_error_post_disturbance: Optional[float]
    convergence_step: Optional[int]


@dataclass
class MetricsReport:
    controller: str
    seed: int
    reason: str
    joints: List[JointMetrics]


@dataclass
class ExperimentResult:
    cfg: ExperimentConfig
    report: MetricsReport
    rows: List[List[Tuple[float, ...]]]  # per joint, one CSV row per step
    states: Optional[List[ControllerState]]
    reason: str

    @property
    def ok(self) -> bool:
        return self.reason == "completed"


def build_plant(cfg: ExperimentConfig) -> ArmPlant:
    theta0 = np.array([j.theta0 for j in cfg.joints])
    return ArmPlant(
        joints=[j.params for j in cfg.joints],
        theta0=theta0,
        schedule=cfg.payload,
        dt_inner=cfg.dt_inner,
        sensor_rate=cfg.sensor_hz,
    )


def build_setups(cfg: ExperimentConfig, rngs: Sequence[np.random.Generator]) -> List[JointSetup]:
    setups = []
    for i, jc in enumerate(cfg.joints):
        noise = None
        if cfg.noise is not None:
            noise = NoiseWindow(
                sigma=cfg.noise.sigma,
                active_steps=int(round(cfg.noise.window_fraction * cfg.steps)),
                mode=cfg.noise.mode,
            )
        setups.append(JointSetup(
            joint_index=i,
            traj=jc.traj,
            cost=jc.cost,
            critic0=jc.critic0,
            actor0=cfg.initial_actor(i, rngs[i]),
            rates=cfg.rates,
            u_max=jc.u_max,
            mode=cfg.residual_mode,
            conv_sigma=cfg.conv_sigma,
            conv_window=cfg.conv_window,
            noise=noise,
            rng=rngs[i],
        ))
    return setups


def _records_to_rows(records: Sequence[StepRecord]) -> List[Tuple[float, ...]]:
    return [
        (r.t, r.theta, r.theta_d, r.epsilon, r.eta, r.u, r.s_hat, r.s_tilde,
         r.actor.w0, r.actor.w_nu, r.actor.w_2nu, r.critic_fro, r.payload_kg)
        for r in records
    ]


def _run_irl(cfg: ExperimentConfig) -> ExperimentResult:
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(len(cfg.joints))]
    plant = build_plant(cfg)
    setups = build_setups(cfg, rngs)
    result = run_lockstep(plant, setups, cfg.steps, cfg.nu)
    rows = [_records_to_rows(rec) for rec in result.records]
    report = _build_report(cfg, rows, [s.converged_at for s in result.states], result.reason)
    return ExperimentResult(cfg, report, rows, result.states, result.reason)


def _run_homfac(cfg: ExperimentConfig) -> ExperimentResult:
    nu_h = 1.0 / cfg.homfac.rate_hz
    n_steps = int(round(cfg.duration * cfg.homfac.rate_hz))
    plant = build_plant(cfg)
    obs = plant.observe()
    states = [HomfacState.initial(cfg.homfac.params_for(i), y0=float(obs[i]))
              for i in range(len(cfg.joints))]
    rows: List[List[Tuple[float, ...]]] = [[] for _ in cfg.joints]
    reason = "completed"
    nan = float("nan")
    for k in range(n_steps):
        t = k * nu_h
        payload = plant.payload_mass
        u_vec = np.zeros(plant.n_joints)
        try:
            for i, jc in enumerate(cfg.joints):
                y = float(obs[i])
                y_d_next = sample(jc.traj, (k + 1) * nu_h)
                u_cmd, new_state = homfac_step(states[i], y, y_d_next, cfg.homfac.params_for(i))
                u_applied = min(max(u_cmd, -jc.u_max), jc.u_max)
                # keep the accumulator inside the saturation band (anti-windup)
                states[i] = HomfacState(new_state.phi_history, u_applied, new_state.y_prev,
                                        new_state.du_prev)
                u_vec[i] = u_applied
                theta_d = sample(jc.traj, t)
                rows[i].append((t, y, theta_d, theta_d - y, new_state.du_prev, u_applied,
                                nan, nan, new_state.phi_history[0], nan, nan, nan, payload))
            plant.actuate(u_vec, nu_h)
            obs = plant.observe()
        except (HomfacDivergenceError, PlantDivergenceError) as err:
            reason = f"numerical divergence at step {k}: {err}"
            break
    report = _build_report(cfg, rows, [None] * len(cfg.joints), reason)
    return ExperimentResult(cfg, report, rows, None, reason)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[Path] = None) -> ExperimentResult:
    log.info("experiment %d: controller=%s seed=%d", cfg.id, cfg.controller, cfg.seed)
    result = _run_irl(cfg) if cfg.controller == "irl" else _run_homfac(cfg)
    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def compute_metrics(
    rows: Sequence[Tuple[float, ...]],
    jc: JointConfig,
    convergence_step: Optional[int],
    disturbance_time: Optional[float],
    settle_start: float = 0.0,
) -> JointMetrics:
    if not rows:
        raise ValueError("empty log")
    arr = np.asarray(rows, dtype=float)
    t = arr[:, 0]
    theta = arr[:, 1]
    theta_d = arr[:, 2]
    eps = arr[:, 3]

    overshoot = None
    if jc.traj.kind == "step_hold" and jc.traj.step_value != 0.0:
        final_ref = jc.traj.offset + jc.traj.step_value
        direction = math.copysign(1.0, jc.traj.step_value)
        post = theta[t >= jc.traj.step_time]
        if post.size:
            overshoot = max(
                0.0,
                float(np.max((post - final_ref) * direction)) / abs(jc.traj.step_value) * 100.0,
            )

    settling = _settling_time(t, eps, theta_d, settle_start)
    rms = float(np.sqrt(np.mean(eps**2)))

    max_post = None
    if disturbance_time is not None:
        post_mask = t >= disturbance_time
        if np.any(post_mask):
            max_post = float(np.max(np.abs(eps[post_mask])))

    return JointMetrics(
        joint=jc.name,
        overshoot_pct=overshoot,
        settling_time=settling,
        rms_error=rms,
        max_abs_error_post_disturbance=max_post,
        convergence_step=convergence_step,
    )


def _settling_time(t, eps, theta_d, settle_start: float) -> Optional[float]:
    band = max(SETTLE_BAND_FRACTION * (float(np.max(theta_d)) - float(np.min(theta_d))),
               SETTLE_BAND_FLOOR)
    mask = t >= settle_start
    tt = t[mask]
    ee = np.abs(eps[mask])
    if tt.size == 0:
        return None
    outside = np.nonzero(ee > band)[0]
    if outside.size == 0:
        return 0.0
    last = outside[-1]
    if last == tt.size - 1:
        return None  # still outside the band at the end: unsettled
    return float(tt[last + 1] - settle_start)


def _disturbance_time(cfg: ExperimentConfig) -> Optional[float]:
    if cfg.payload.kind == "step":
        return cfg.payload.step_time
    if cfg.payload.kind == "ramp":
        return cfg.payload.ramp_start
    if cfg.noise is not None:
        return cfg.noise.window_fraction * cfg.duration
    return None


def _build_report(cfg, rows, converged, reason) -> MetricsReport:
    dist_t = _disturbance_time(cfg)
    joints = []
    for i, jc in enumerate(cfg.joints):
        if rows[i]:
            joints.append(compute_metrics(rows[i], jc, converged[i], dist_t))
        else:
            joints.append(JointMetrics(jc.name, None, None, float("nan"), None, None))
    return MetricsReport(cfg.controller, cfg.seed, reason, joints)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outputs(result: ExperimentResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, joint_rows in enumerate(result.rows):
        path = out_dir / f"joint{i + 1}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in joint_rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        fh.write("controller,seed,joint,overshoot_pct,settling_time_s,"
                 "rms_error_rad,max_abs_error_post_disturbance_rad,convergence_step,reason\n")
        for m in result.report.joints:
            fh.write(",".join([
                result.report.controller,
                str(result.report.seed),
                m.joint,
                _fmt(m.overshoot_pct),
                _fmt(m.settling_time),
                _fmt(m.rms_error),
                _fmt(m.max_abs_error_post_disturbance),
                _fmt(m.convergence_step),
                result.report.reason.replace(",", ";"),
            ]) + "\n")
    log.info("wrote %d joint logs to %s", len(result.rows), out_dir)
