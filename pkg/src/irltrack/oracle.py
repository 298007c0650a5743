"""Exact value iteration for the scalar LTI tracking problem.

For the plant y+ = a*y + b*u under incremental actuation u+ = u + eta, the
tracking error obeys the reference-free recursion

    eps(t+nu) = (1+a)*eps(t) - a*eps(t-nu) - b*eta(t)

whenever the reference is constant.  Stacking the three error taps with the
correction gives an exact linear map of the augmented state, so the 4x4
value kernel of the trapezoid-cost problem can be iterated to a fixed point
directly.  This is the ground truth for the online learner's gains.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np


class OracleFailure(RuntimeError):
    """Exact value iteration failed to converge within the iteration cap."""


def lti_error_system(a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """State matrices of the 3-tap error window driven by the scalar plant."""
    a_x = np.array([
        [1.0 + a, -a, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
    ])
    b_x = np.array([-b, 0.0, 0.0])
    return a_x, b_x


def _augmented_map(a_x: np.ndarray, b_x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Closed-loop map of [window; correction] when the next correction is w @ window."""
    g = np.zeros((4, 4))
    g[:3, :3] = a_x
    g[:3, 3] = b_x
    g[3, :3] = w @ a_x
    g[3, 3] = w @ b_x
    return g


@dataclass(frozen=True)
class LtiOracleResult:
    kernel: np.ndarray  # 4x4 fixed-point value kernel
    gains: np.ndarray  # optimal feedback row over the error taps
    iterations: int
    probe_values: Optional[List[float]] = None


def exact_value_iteration(
    a: float,
    b: float,
    q: np.ndarray,
    r: float,
    nu: float,
    tol: float = 1e-10,
    max_iter: int = 10**6,
    probe: Optional[np.ndarray] = None,
) -> LtiOracleResult:
    """Iterate the kernel fixed-point map to `tol` and return kernel + gains.

    Each sweep evaluates one bootstrap backup with the current gains (cost
    is the two-point trapezoid of the quadratic running cost over one
    interval) and then improves the gains greedily.  Starts from the zero
    kernel and zero gains, which produces a non-decreasing value sequence.
    """
    if b == 0.0:
        raise ValueError("control gain b must be nonzero")
    if not np.isfinite(a):
        raise ValueError("plant pole a must be finite")
    a_x, b_x = lti_error_system(a, b)
    cost = np.zeros((4, 4))
    cost[:3, :3] = np.asarray(q, dtype=float)
    cost[3, 3] = float(r)

    kernel = np.zeros((4, 4))
    w = np.zeros(3)
    probe_values: Optional[List[float]] = [] if probe is not None else None
    for it in range(1, max_iter + 1):
        g = _augmented_map(a_x, b_x, w)
        new = (nu / 2.0) * (cost + g.T @ cost @ g) + g.T @ kernel @ g
        new = (new + new.T) / 2.0
        if new[3, 3] > 0.0:
            w = -new[3, :3] / new[3, 3]
        if probe_values is not None:
            v = np.asarray(probe, dtype=float)
            probe_values.append(0.5 * float(v @ new @ v))
        if float(np.linalg.norm(new - kernel, "fro")) <= tol:
            return LtiOracleResult(new, w.copy(), it, probe_values)
        kernel = new
    raise OracleFailure(f"kernel map did not reach {tol:g} within {max_iter} sweeps")


def policy_evaluation_values(
    a: float,
    b: float,
    q: np.ndarray,
    r: float,
    nu: float,
    gains: np.ndarray,
    probe: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 10**5,
) -> List[float]:
    """Probe values of the kernel evaluation iterates from zero under fixed gains.

    From the zero kernel each backup adds a PSD increment, so the returned
    sequence is exactly non-decreasing and (for stabilizing gains) converges
    upward to the policy's value at the probe.
    """
    a_x, b_x = lti_error_system(a, b)
    cost = np.zeros((4, 4))
    cost[:3, :3] = np.asarray(q, dtype=float)
    cost[3, 3] = float(r)
    g = _augmented_map(a_x, b_x, np.asarray(gains, dtype=float))
    v = np.asarray(probe, dtype=float)
    kernel = np.zeros((4, 4))
    values: List[float] = []
    for _ in range(max_iter):
        new = (nu / 2.0) * (cost + g.T @ cost @ g) + g.T @ kernel @ g
        values.append(0.5 * float(v @ new @ v))
        if float(np.linalg.norm(new - kernel, "fro")) <= tol:
            return values
        kernel = new
    raise OracleFailure("policy evaluation did not converge; gains may be destabilizing")
