"""High-order model-free adaptive control baseline.

Compact-form dynamic linearization with a high-order pseudo-partial-
derivative estimator: the PPD estimate is a weighted sum of its own recent
history plus a projection-style innovation, reset to its initial value
when it collapses or flips sign, and the control moves proportionally to
the tracking error scaled by the estimate.  Runs at its own (slower) rate
inside the same experiment harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple


class HomfacDivergenceError(RuntimeError):
    """The control recursion produced a non-finite value."""


@dataclass(frozen=True)
class HomfacParams:
    """Estimator/controller parameters; `alpha` is normalized at construction."""

    alpha: Tuple[float, ...]  # weights over past PPD estimates; length = order
    eta: float  # estimator step in (0, 2]
    lam: float  # control penalty > 0
    mu: float  # estimator penalty > 0
    rho: float  # control step in (0, 1]
    phi0: float  # initial PPD estimate for this joint
    epsilon_reset: float = 1e-5

    def __post_init__(self) -> None:
        if len(self.alpha) < 1:
            raise ValueError("alpha must have at least one weight")
        total = sum(self.alpha)
        if total <= 0.0:
            raise ValueError("alpha weights must sum to a positive value")
        if abs(total - 1.0) > 1e-12:
            object.__setattr__(self, "alpha", tuple(a / total for a in self.alpha))
        if not (0.0 < self.eta <= 2.0):
            raise ValueError("eta must be in (0, 2]")
        if self.lam <= 0.0 or self.mu <= 0.0:
            raise ValueError("lam and mu must be positive")
        if not (0.0 < self.rho <= 1.0):
            raise ValueError("rho must be in (0, 1]")
        if self.phi0 == 0.0:
            raise ValueError("phi0 must be nonzero (its sign anchors the reset rule)")

    @property
    def order(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class HomfacState:
    """Recursion state: PPD history (most recent first), previous control,
    output, and control increment."""

    phi_history: Tuple[float, ...]
    u_prev: float
    y_prev: float
    du_prev: float

    @classmethod
    def initial(cls, p: HomfacParams, y0: float, u0: float = 0.0) -> "HomfacState":
        return cls(phi_history=(p.phi0,) * p.order, u_prev=u0, y_prev=y0, du_prev=0.0)


def homfac_step(
    state: HomfacState, y: float, y_d_next: float, p: HomfacParams
) -> Tuple[float, HomfacState]:
    """One control update: estimate the PPD, apply the reset rule, move the
    control toward the next reference."""
    du = state.du_prev
    dy = y - state.y_prev
    phi = sum(a * ph for a, ph in zip(p.alpha, state.phi_history))
    phi += p.eta * du * (dy - state.phi_history[0] * du) / (p.mu + du * du)
    if abs(phi) <= p.epsilon_reset or math.copysign(1.0, phi) != math.copysign(1.0, p.phi0):
        phi = p.phi0
    error = y_d_next - y
    du_new = p.rho * phi * error / (p.lam + phi * phi)
    u = state.u_prev + du_new
    if not (math.isfinite(phi) and math.isfinite(u)):
        raise HomfacDivergenceError(f"non-finite recursion (phi={phi!r}, u={u!r})")
    new_state = HomfacState(
        phi_history=(phi,) + state.phi_history[: p.order - 1],
        u_prev=u,
        y_prev=y,
        du_prev=du_new,
    )
    return u, new_state


def increment_bound(p: HomfacParams, error: float) -> float:
    """AM-GM ceiling on one control increment: rho*|e| / (2*sqrt(lam))."""
    return p.rho * abs(error) / (2.0 * math.sqrt(p.lam))
