"""Online actor-critic episode driver.

One control step: apply the actor's correction to the accumulated
actuation (saturated), hold it over the interval, observe the next angle,
shift the error window, regress the critic toward the trapezoid bootstrap
target, then pull the actor toward the post-update greedy gains.  A gate
on consecutive critic changes freezes adaptation; actuation continues with
frozen weights so logs always cover the requested horizon.

Multiple joints run in lockstep against a shared plant, each with its own
independent controller.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .core import (
    ActorWeights,
    AugmentedState,
    CostWeights,
    CriticWeights,
    ErrorWindow,
    LearningRates,
    NumericalDivergenceError,
    SingularBlockError,
    actor_target,
    actor_update,
    converged,
    correction,
    critic_target,
    critic_update,
    value,
)
from .plant import PlantDivergenceError
from .traj import TrajectorySpec, sample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControllerState:
    """Per-joint controller state after `step` completed control steps."""

    u: float
    x: ErrorWindow
    critic: CriticWeights
    actor: ActorWeights
    step: int
    converged_at: Optional[int] = None


@dataclass(frozen=True)
class StepRecord:
    """One logged control step (time is exactly step * nu)."""

    t: float
    theta: float
    theta_d: float
    epsilon: float
    eta: float
    u: float
    s_hat: float
    s_tilde: float
    actor: ActorWeights
    critic_fro: float
    payload_kg: float


@dataclass(frozen=True)
class NoiseWindow:
    """Per-step disturbance active for the first `active_steps` control steps.

    mode "weights": each gain gets an independent N(0, sigma^2) draw added and
    the disturbed gains persist in the controller state (the adaptation has to
    counteract them).  mode "actuation": a single N(0, sigma^2) draw is added
    to the correction signal on its way to the actuator; the stored gains are
    untouched and the applied correction is what the critic sees.
    """

    sigma: float
    active_steps: int
    mode: str = "weights"

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise ValueError("noise sigma must be >= 0")
        if self.active_steps < 0:
            raise ValueError("active_steps must be >= 0")
        if self.mode not in ("weights", "actuation"):
            raise ValueError(f"unknown noise mode {self.mode!r}")


@dataclass(frozen=True)
class JointSetup:
    """Everything one joint's controller needs for an episode."""

    joint_index: int
    traj: TrajectorySpec
    cost: CostWeights
    critic0: CriticWeights
    actor0: ActorWeights
    rates: LearningRates
    u_max: float = 1.0
    mode: str = "signed"
    conv_sigma: float = 1e-4
    conv_window: int = 16
    noise: Optional[NoiseWindow] = None
    rng: Optional[np.random.Generator] = None
    # Optional guard: end the episode early if |error| leaves this envelope.
    eps_abort: Optional[float] = None


@dataclass
class EpisodeResult:
    records: List[StepRecord]
    reason: str
    state: ControllerState


@dataclass
class LockstepResult:
    records: List[List[StepRecord]]  # one log per setup, in setup order
    states: List[ControllerState]
    reason: str

    @property
    def ok(self) -> bool:
        return self.reason == "completed"


class UpdateDiag(NamedTuple):
    s_hat: float
    s_tilde: float
    eta_hat: float
    u_tilde: float
    min_minor: float


def update_step(
    state: ControllerState,
    now: Tuple[ErrorWindow, float],
    nxt: Tuple[ErrorWindow, float],
    cw: CostWeights,
    rates: LearningRates,
    nu: float,
    mode: str = "signed",
    eta_hat: Optional[float] = None,
) -> Tuple[ControllerState, UpdateDiag]:
    """One adaptation step: critic first, then actor against the post-update
    greedy target.  Returns the new state and the step diagnostics.

    `now[1]` is the correction that actually reached the actuator (what the
    value kernel and cost see); `eta_hat` is the actor's own output, which
    only differs under actuation-path disturbance.
    """
    if eta_hat is None:
        eta_hat = now[1]
    v_now = AugmentedState(now[0], now[1])
    s_hat = value(state.critic, v_now)
    s_tilde = critic_target(cw, now, nxt, state.critic, nu)
    critic2 = critic_update(state.critic, v_now, s_hat, s_tilde, rates.alpha_c, mode)
    u_tilde = actor_target(critic2, now[0])
    actor2 = actor_update(state.actor, now[0], eta_hat, u_tilde, rates.alpha_a, mode)
    if log.isEnabledFor(logging.DEBUG):
        min_minor = min(critic2.leading_minors())
        if min_minor <= 0.0:
            log.debug("critic kernel lost positive definiteness: min minor %.3e at step %d",
                      min_minor, state.step)
    else:
        min_minor = float("nan")
    new_state = replace(state, critic=critic2, actor=actor2, step=state.step + 1)
    return new_state, UpdateDiag(s_hat, s_tilde, eta_hat, u_tilde, min_minor)


def disturb_actor(a: ActorWeights, sigma: float, rng: np.random.Generator) -> ActorWeights:
    """Add an independent N(0, sigma^2) draw to each gain; identity for sigma=0."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return a
    return ActorWeights.from_array(a.as_array() + rng.normal(0.0, sigma, size=3))


class _JointDriver:
    """Mutable episode bookkeeping for one joint (single-owner)."""

    def __init__(self, setup: JointSetup, theta0: float, nu: float):
        self.setup = setup
        self.nu = nu
        eps0 = sample(setup.traj, 0.0) - theta0
        self.state = ControllerState(
            u=0.0, x=ErrorWindow.filled(eps0), critic=setup.critic0,
            actor=setup.actor0, step=0,
        )
        self.theta = theta0
        self.eta = 0.0  # correction that reached the actuator
        self.eta_hat = 0.0  # actor's own output (differs under actuation noise)
        self.history: deque = deque([setup.critic0], maxlen=setup.conv_window + 1)

    def begin_step(self, l: int) -> float:
        """Disturb per schedule, form the correction, accumulate and clamp
        the actuation.  Returns the actuation to apply."""
        s = self.setup
        st = self.state
        actor = st.actor
        noise_on = s.noise is not None and s.noise.sigma > 0.0 and l < s.noise.active_steps
        if noise_on and s.noise.mode == "weights":
            actor = disturb_actor(actor, s.noise.sigma, s.rng)
        eta_hat = correction(actor, st.x)
        eta = eta_hat
        if noise_on and s.noise.mode == "actuation":
            eta = eta_hat + float(s.rng.normal(0.0, s.noise.sigma))
        u = min(max(st.u + eta, -s.u_max), s.u_max)
        self.eta = eta
        self.eta_hat = eta_hat
        self.state = replace(st, u=u, actor=actor)
        return u

    def finish_step(self, l: int, theta_next: float, payload: float) -> StepRecord:
        """Consume the post-interval measurement, adapt (unless frozen) and log."""
        s = self.setup
        st = self.state
        t = l * self.nu
        theta_d_next = sample(s.traj, (l + 1) * self.nu)
        x_next = st.x.shift(theta_d_next - theta_next)
        eta_next = correction(st.actor, x_next)
        now = (st.x, self.eta)
        nxt = (x_next, eta_next)
        if st.converged_at is None:
            new_state, diag = update_step(st, now, nxt, s.cost, s.rates, self.nu, s.mode,
                                          eta_hat=self.eta_hat)
            self.history.append(new_state.critic)
            if converged(list(self.history), s.conv_sigma, s.conv_window):
                new_state = replace(new_state, converged_at=l)
                log.debug("joint %d converged at step %d", s.joint_index, l)
        else:
            # Frozen weights: still evaluate the value and its target for the log.
            s_hat = value(st.critic, AugmentedState(now[0], now[1]))
            s_tilde = critic_target(s.cost, now, nxt, st.critic, self.nu)
            diag = UpdateDiag(s_hat, s_tilde, self.eta_hat, float("nan"), float("nan"))
            new_state = replace(st, step=st.step + 1)
        record = StepRecord(
            t=t,
            theta=self.theta,
            theta_d=sample(s.traj, t),
            epsilon=st.x.e0,
            eta=self.eta,
            u=st.u,
            s_hat=diag.s_hat,
            s_tilde=diag.s_tilde,
            actor=new_state.actor,
            critic_fro=new_state.critic.fro,
            payload_kg=payload,
        )
        self.state = replace(new_state, x=x_next)
        self.theta = theta_next
        return record


def run_lockstep(plant, setups: Sequence[JointSetup], n_steps: int, nu: float) -> LockstepResult:
    """Run all controllers in lockstep against the shared plant.

    Aborts the whole run on a controller or plant numerical failure, keeping
    the partial logs gathered so far.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    for s in setups:
        if s.traj.duration + 1e-9 < n_steps * nu:
            raise ValueError(
                f"trajectory for joint {s.joint_index} spans {s.traj.duration}s "
                f"but the episode needs {n_steps * nu}s"
            )
    obs = plant.observe()
    drivers = [_JointDriver(s, float(obs[s.joint_index]), nu) for s in setups]
    records: List[List[StepRecord]] = [[] for _ in setups]
    reason = "completed"
    for l in range(n_steps):
        u_vec = np.zeros(plant.n_joints)
        payload = plant.payload_mass
        try:
            for d in drivers:
                u_vec[d.setup.joint_index] = d.begin_step(l)
            plant.actuate(u_vec, nu)
            obs = plant.observe()
            envelope_hit = None
            for d in drivers:
                cap = d.setup.eps_abort
                if cap is not None:
                    theta_d = sample(d.setup.traj, (l + 1) * nu)
                    if abs(theta_d - float(obs[d.setup.joint_index])) > cap:
                        envelope_hit = d.setup.joint_index
                        break
            if envelope_hit is not None:
                reason = f"error envelope exceeded at step {l} (joint {envelope_hit})"
                break
            for i, d in enumerate(drivers):
                records[i].append(d.finish_step(l, float(obs[d.setup.joint_index]), payload))
        except SingularBlockError as err:
            reason = f"singular critic block at step {l}: {err}"
            break
        except (NumericalDivergenceError, PlantDivergenceError) as err:
            reason = f"numerical divergence at step {l}: {err}"
            break
    return LockstepResult(records, [d.state for d in drivers], reason)


def run_episode(plant, setup: JointSetup, n_steps: int, nu: float) -> EpisodeResult:
    """Single-joint episode against the given plant handle."""
    result = run_lockstep(plant, [setup], n_steps, nu)
    return EpisodeResult(result.records[0], result.reason, result.states[0])
