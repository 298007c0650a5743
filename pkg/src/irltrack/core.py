"""Kernel math for the incremental actor-critic tracking controller.

The controller state is a three-tap window of tracking errors plus the
incremental correction applied to the actuation signal.  A symmetric 4x4
kernel matrix defines the quadratic value of (window, correction); its
eta-row yields the greedy feedback gains.  Everything here is a pure
function of immutable value types; episode bookkeeping lives in `loop`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

# Guard below which the eta-eta kernel entry is treated as singular.
EPS_INV = 1e-8
# Symmetry tolerance accepted at construction; updates re-symmetrize exactly.
SYM_TOL = 1e-9

UPDATE_MODES = ("signed", "literal")


class SingularBlockError(RuntimeError):
    """Eta-eta kernel entry too small to invert for gain extraction."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NumericalDivergenceError(RuntimeError):
    """A tuning update produced non-finite weights."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class ErrorWindow:
    """Tracking errors at t, t-nu and t-2nu (radians)."""

    e0: float
    e1: float
    e2: float

    def __post_init__(self) -> None:
        _require_finite("error window entry", self.e0, self.e1, self.e2)

    @classmethod
    def filled(cls, e: float) -> "ErrorWindow":
        """Backfill all three taps with the same error (episode start)."""
        return cls(e, e, e)

    def shift(self, e_new: float) -> "ErrorWindow":
        """New freshest error; e0 -> e1 -> e2, oldest tap dropped."""
        return ErrorWindow(e_new, self.e0, self.e1)

    def as_array(self) -> np.ndarray:
        # Cached read-only view; the type is immutable so this is safe.
        arr = self.__dict__.get("_arr")
        if arr is None:
            arr = np.array([self.e0, self.e1, self.e2])
            arr.setflags(write=False)
            object.__setattr__(self, "_arr", arr)
        return arr


@dataclass(frozen=True)
class AugmentedState:
    """Error window stacked with the correction signal; flattens to R^4."""

    x: ErrorWindow
    eta: float

    def __post_init__(self) -> None:
        _require_finite("correction signal", self.eta)

    def as_array(self) -> np.ndarray:
        arr = self.__dict__.get("_arr")
        if arr is None:
            arr = np.array([self.x.e0, self.x.e1, self.x.e2, self.eta])
            arr.setflags(write=False)
            object.__setattr__(self, "_arr", arr)
        return arr


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


class CriticWeights:
    """Symmetric 4x4 value kernel with (window, correction) block layout.

    The matrix is stored read-only.  Construction rejects asymmetry beyond
    SYM_TOL, non-finite entries, and an eta-eta entry at or below the
    inversion guard (the latter raises SingularBlockError so episode
    drivers can abort cleanly).
    """

    __slots__ = ("m",)

    def __init__(self, m: np.ndarray):
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"critic kernel must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NumericalDivergenceError("critic kernel has non-finite entries")
        if np.max(np.abs(m - m.T)) > SYM_TOL:
            raise ValueError("critic kernel is not symmetric within 1e-9")
        if m[3, 3] <= EPS_INV:
            raise SingularBlockError(
                f"eta-eta kernel entry {m[3, 3]:.3e} is at or below the {EPS_INV:.0e} guard"
            )
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "CriticWeights":
        return cls(np.eye(4))

    @property
    def m_xx(self) -> np.ndarray:
        return self.m[:3, :3]

    @property
    def m_xeta(self) -> np.ndarray:
        return self.m[:3, 3]

    @property
    def m_etax(self) -> np.ndarray:
        return self.m[3, :3]

    @property
    def m_etaeta(self) -> float:
        return float(self.m[3, 3])

    @property
    def fro(self) -> float:
        return float(np.linalg.norm(self.m, "fro"))

    def leading_minors(self) -> Tuple[float, float, float, float]:
        """Determinants of the four leading principal blocks."""
        return tuple(float(np.linalg.det(self.m[:k, :k])) for k in range(1, 5))

    def is_positive_definite(self) -> bool:
        return all(d > 0.0 for d in self.leading_minors())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CriticWeights) and np.array_equal(self.m, other.m)

    def __repr__(self) -> str:
        return f"CriticWeights(fro={self.fro:.6g})"


@dataclass(frozen=True)
class ActorWeights:
    """Feedback gain row over the three error taps."""

    w0: float
    w_nu: float
    w_2nu: float

    def __post_init__(self) -> None:
        _require_finite("actor gain", self.w0, self.w_nu, self.w_2nu)

    @classmethod
    def zeros(cls) -> "ActorWeights":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, w: np.ndarray) -> "ActorWeights":
        w = np.asarray(w, dtype=float).reshape(3)
        return cls(float(w[0]), float(w[1]), float(w[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.w0, self.w_nu, self.w_2nu])


def _leading_minors_positive(q: np.ndarray) -> bool:
    return all(np.linalg.det(q[:k, :k]) > 0.0 for k in range(1, q.shape[0] + 1))


class CostWeights:
    """Quadratic running-cost weights: 3x3 PD matrix on the window, positive scalar on eta."""

    __slots__ = ("q", "r")

    def __init__(self, q: np.ndarray, r: float):
        q = np.asarray(q, dtype=float)
        if q.shape != (3, 3):
            raise ValueError(f"window cost matrix must be 3x3, got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("window cost matrix has non-finite entries")
        if np.max(np.abs(q - q.T)) > SYM_TOL:
            raise ValueError("window cost matrix is not symmetric")
        if not _leading_minors_positive(q):
            raise ValueError("window cost matrix is not positive definite")
        if not (math.isfinite(r) and r > 0.0):
            raise ValueError(f"correction cost must be a positive scalar, got {r!r}")
        q = q.copy()
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(r))

    @classmethod
    def identity(cls, r: float = 1.0) -> "CostWeights":
        return cls(np.eye(3), r)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, CostWeights)
                and np.array_equal(self.q, other.q) and self.r == other.r)


@dataclass(frozen=True)
class LearningRates:
    """Critic and actor adaptation rates, both strictly inside (0, 1)."""

    alpha_c: float
    alpha_a: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha_c < 1.0):
            raise ValueError(f"critic rate must be in (0,1), got {self.alpha_c}")
        if not (0.0 < self.alpha_a < 1.0):
            raise ValueError(f"actor rate must be in (0,1), got {self.alpha_a}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def correction(a: ActorWeights, x: ErrorWindow) -> float:
    """Correction signal: gain row applied to the error window."""
    return a.w0 * x.e0 + a.w_nu * x.e1 + a.w_2nu * x.e2


def value(c: CriticWeights, v: AugmentedState) -> float:
    """Quadratic kernel value 0.5 * v' M v."""
    arr = v.as_array()
    return 0.5 * float(arr @ c.m @ arr)


def utility(cw: CostWeights, x: ErrorWindow, eta: float) -> float:
    """Running cost 0.5 * (x' Q x + r * eta^2)."""
    xv = x.as_array()
    return 0.5 * float(xv @ cw.q @ xv + cw.r * eta * eta)


def integral_utility(
    cw: CostWeights,
    samples: Sequence[Tuple[ErrorWindow, float]],
    nu: float,
) -> float:
    """Trapezoidal quadrature of the running cost over one control interval.

    `samples` are (window, eta) pairs at uniform sub-interval times spanning
    [t, t+nu].  Exact for a constant integrand; second-order accurate
    otherwise (the quadrature error is part of the contract, not hidden).
    """
    if len(samples) < 2:
        raise ValueError("integral_utility needs at least 2 samples spanning the interval")
    us = [utility(cw, x, eta) for x, eta in samples]
    dx = nu / (len(us) - 1)
    return float(dx * (0.5 * us[0] + sum(us[1:-1]) + 0.5 * us[-1]))


def critic_target(
    cw: CostWeights,
    now: Tuple[ErrorWindow, float],
    nxt: Tuple[ErrorWindow, float],
    c: CriticWeights,
    nu: float,
) -> float:
    """Bootstrap target: interval cost (two-sample trapezoid) plus next value."""
    run = integral_utility(cw, [now, nxt], nu)
    return run + value(c, AugmentedState(nxt[0], nxt[1]))


def _update_factor(residual: float, mode: str) -> float:
    if mode == "signed":
        return residual
    if mode == "literal":
        # Nonnegative squared-error factor; kept for comparison runs even
        # though it is not a descent direction (see README).
        return 0.5 * residual * residual
    raise ValueError(f"unknown update mode {mode!r}; expected one of {UPDATE_MODES}")


def critic_update(
    c: CriticWeights,
    v: AugmentedState,
    s_hat: float,
    s_tilde: float,
    alpha_c: float,
    mode: str = "signed",
) -> CriticWeights:
    """Rank-1 kernel correction toward the bootstrap target, re-symmetrized."""
    factor = _update_factor(s_hat - s_tilde, mode)
    arr = v.as_array()
    m_new = _symmetrize(c.m - alpha_c * factor * np.outer(arr, arr))
    # CriticWeights validates finiteness and raises NumericalDivergenceError.
    return CriticWeights(m_new)


def greedy_gains(c: CriticWeights) -> ActorWeights:
    """Gain row minimizing the kernel value over eta: -m_etax / m_etaeta."""
    if c.m_etaeta <= EPS_INV:
        raise SingularBlockError(
            f"cannot extract gains: eta-eta entry {c.m_etaeta:.3e} at or below guard"
        )
    return ActorWeights.from_array(-c.m_etax / c.m_etaeta)


def actor_target(c: CriticWeights, x: ErrorWindow) -> float:
    """Greedy correction for the window under the given kernel."""
    return correction(greedy_gains(c), x)


def actor_update(
    a: ActorWeights,
    x: ErrorWindow,
    eta_hat: float,
    u_tilde: float,
    alpha_a: float,
    mode: str = "signed",
) -> ActorWeights:
    """Gain-row correction toward the greedy target."""
    factor = _update_factor(eta_hat - u_tilde, mode)
    w_new = a.as_array() - alpha_a * factor * x.as_array()
    if not np.all(np.isfinite(w_new)):
        raise NumericalDivergenceError("actor update produced non-finite weights")
    return ActorWeights.from_array(w_new)


def converged(history: Sequence[CriticWeights], sigma: float, window: int) -> bool:
    """True iff the last `window` consecutive kernel differences all have
    Frobenius norm <= sigma (inclusive).  False when history is too short."""
    if len(history) < window + 1:
        return False
    tail = history[-(window + 1):]
    return all(
        float(np.linalg.norm(tail[i + 1].m - tail[i].m, "fro")) <= sigma
        for i in range(window)
    )
