"""Adaptive integration of smooth (event-free) vector fields.

Thin wrapper over the Dormand-Prince 5(4) stepper that keeps the accepted
step grid and the per-step dense interpolants, so trajectories can be
evaluated at arbitrary times afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45, OdeSolution

from .errors import IntegrationFailure

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-10


@dataclass
class SmoothSolution:
    """Result of one event-free integration."""

    times: np.ndarray          # accepted step endpoints, times[0] = t0
    states: np.ndarray         # states at `times`, shape (len(times), dim)
    interpolant: OdeSolution = field(repr=False)

    def __call__(self, t):
        return self.interpolant(t)


def integrate_smooth(rhs, t0, y0, t_end, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                     max_step=np.inf):
    """Integrate y' = rhs(t, y) from t0 to t_end (t_end >= t0).

    Returns a SmoothSolution. Raises IntegrationFailure on step-size
    collapse. A zero-length horizon yields a single-point solution.
    """
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if t_end < t0:
        raise ValueError("t_end must be >= t0")
    if t_end == t0:
        one = OdeSolution([t0, t0], [_ConstantDense(t0, y0)])
        return SmoothSolution(np.array([t0]), y0[np.newaxis, :].copy(), one)
    solver = RK45(rhs, t0, y0, t_bound=t_end, rtol=rtol, atol=atol,
                  max_step=max_step)
    times = [t0]
    states = [y0.copy()]
    segments = []
    while solver.status == "running":
        solver.step()
        if solver.status == "failed":
            raise IntegrationFailure(
                f"step-size collapse at t={solver.t:.6g}")
        segments.append(solver.dense_output())
        times.append(solver.t)
        states.append(solver.y.copy())
    sol = OdeSolution(times, segments)
    return SmoothSolution(np.asarray(times), np.asarray(states), sol)


class _ConstantDense:
    """Degenerate interpolant for an empty horizon."""

    def __init__(self, t, y):
        self.t_min = self.t_old = t
        self.t_max = self.t = t
        self._y = np.asarray(y, dtype=float)

    def __call__(self, t):
        t = np.asarray(t)
        if t.ndim == 0:
            return self._y.copy()
        return np.repeat(self._y[:, None], t.size, axis=1)
