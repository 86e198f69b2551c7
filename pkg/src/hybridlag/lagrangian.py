"""Time-dependent Lagrangian systems and their two evolution fields.

A system is described by a scalar function L(t, q, v) together with its
first partial derivatives in q and v. From these the module computes

* the second-order evolution field (velocity and acceleration) obtained
  by isolating the accelerations from the Euler-Lagrange equations,
* the energy  E(t, q, v) = <dL/dv, v> - L,
* the fiber derivative (t, q, v) -> (t, q, p = dL/dv) and its inverse,
* the first-order field on momentum variables whose integral curves
  satisfy Hamilton's equations, derived from the same L.

Accelerations are taken from `acceleration` when the model supplies a
closed form; otherwise the velocity Hessian W = d2L/dv2 and the mixed
second derivatives are assembled by central finite differences of dL/dv
and the linear system W * a = dL/dq - (d2L/dvdq) v - d2L/dvdt is solved
with a pivoted LU factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import NoConvergence, SingularHessian
from .integrate import DEFAULT_ATOL, DEFAULT_RTOL, integrate_smooth

FD_STEP = 1e-6
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
DEFAULT_CONDITION_BOUND = 1e8


@dataclass(frozen=True)
class State:
    """A point (t, q, v) of the extended velocity phase space."""

    t: float
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, float)))

    def is_finite(self):
        return (np.isfinite(self.t) and np.all(np.isfinite(self.q))
                and np.all(np.isfinite(self.v)))


@dataclass(frozen=True)
class CoState:
    """A point (t, q, p) of the extended momentum phase space."""

    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, float)))

    def is_finite(self):
        return (np.isfinite(self.t) and np.all(np.isfinite(self.q))
                and np.all(np.isfinite(self.p)))


@dataclass(frozen=True)
class LagrangianSystem:
    """A time-dependent Lagrangian with its first derivatives.

    Attributes:
        dim: configuration dimension n.
        lagrangian: L(t, q, v) -> float.
        dL_dq: (t, q, v) -> array of n partials in q.
        dL_dv: (t, q, v) -> array of n partials in v (the momenta).
        acceleration: optional closed-form (t, q, v) -> array of n
            accelerations. When absent the accelerations are solved
            numerically from the Euler-Lagrange equations.
        coordinate_names: labels, metadata only.
        condition_bound: reject states where a cheap estimate of the
            velocity-Hessian condition number exceeds this bound.

    Instances are immutable and safe to share between concurrent runs.
    """

    dim: int
    lagrangian: Callable[[float, np.ndarray, np.ndarray], float]
    dL_dq: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    dL_dv: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    acceleration: Optional[Callable[[float, np.ndarray, np.ndarray],
                                    np.ndarray]] = None
    coordinate_names: Sequence[str] = field(default=())
    condition_bound: float = DEFAULT_CONDITION_BOUND

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not self.coordinate_names:
            object.__setattr__(self, "coordinate_names",
                               tuple(f"q{i+1}" for i in range(self.dim)))

    # -- second derivatives by finite differences ----------------------

    def velocity_hessian(self, s: State) -> np.ndarray:
        """W[i, j] = d(dL/dv_i)/dv_j by central differences."""
        h = FD_STEP * max(1.0, float(np.max(np.abs(s.v))))
        W = np.empty((self.dim, self.dim))
        for j in range(self.dim):
            vp = s.v.copy(); vp[j] += h
            vm = s.v.copy(); vm[j] -= h
            W[:, j] = (self.dL_dv(s.t, s.q, vp) - self.dL_dv(s.t, s.q, vm)) / (2*h)
        return W

    def _mixed_qv(self, s: State) -> np.ndarray:
        """M[i, j] = d(dL/dv_i)/dq_j by central differences."""
        h = FD_STEP * max(1.0, float(np.max(np.abs(s.q))))
        M = np.empty((self.dim, self.dim))
        for j in range(self.dim):
            qp = s.q.copy(); qp[j] += h
            qm = s.q.copy(); qm[j] -= h
            M[:, j] = (self.dL_dv(s.t, qp, s.v) - self.dL_dv(s.t, qm, s.v)) / (2*h)
        return M

    def _mixed_tv(self, s: State) -> np.ndarray:
        """d(dL/dv)/dt by central differences."""
        h = FD_STEP * max(1.0, abs(s.t))
        return (self.dL_dv(s.t + h, s.q, s.v)
                - self.dL_dv(s.t - h, s.q, s.v)) / (2*h)

    def _factor_hessian(self, s: State):
        W = self.velocity_hessian(s)
        try:
            lu, piv = lu_factor(W)
        except Exception as exc:
            raise SingularHessian(f"velocity Hessian not factorizable at "
                                  f"t={s.t:.6g}") from exc
        diag = np.abs(np.diag(lu))
        if diag.min() == 0.0 or diag.max() / diag.min() > self.condition_bound:
            raise SingularHessian(
                f"velocity Hessian condition estimate exceeds "
                f"{self.condition_bound:.1e} at t={s.t:.6g}")
        return lu, piv

    # -- operations -----------------------------------------------------

    def evolution_field(self, s: State):
        """Velocity and acceleration (dq, dv) of the evolution field.

        dq = v; dv solves the Euler-Lagrange equations at (t, q, v).
        Raises SingularHessian when hyperregularity is lost.
        """
        if self.acceleration is not None:
            return s.v.copy(), np.atleast_1d(
                np.asarray(self.acceleration(s.t, s.q, s.v), float))
        lu_piv = self._factor_hessian(s)
        rhs = (self.dL_dq(s.t, s.q, s.v) - self._mixed_qv(s) @ s.v
               - self._mixed_tv(s))
        return s.v.copy(), lu_solve(lu_piv, rhs)

    def energy(self, s: State) -> float:
        """E = <dL/dv, v> - L at the state."""
        return float(np.dot(self.dL_dv(s.t, s.q, s.v), s.v)
                     - self.lagrangian(s.t, s.q, s.v))

    def legendre(self, s: State) -> CoState:
        """Fiber derivative: (t, q, v) -> (t, q, p = dL/dv)."""
        return CoState(s.t, s.q.copy(), np.asarray(self.dL_dv(s.t, s.q, s.v),
                                                   float).copy())

    def inverse_legendre(self, cs: CoState, v0=None) -> State:
        """Solve dL/dv(t, q, v) = p for v by damped-free Newton iteration.

        `v0` seeds the iteration (warm start); defaults to zero. The
        residual is driven below NEWTON_TOL * max(1, |p|). Raises
        NoConvergence after NEWTON_MAXITER iterations.
        """
        v = np.zeros(self.dim) if v0 is None else np.asarray(v0, float).copy()
        tol = NEWTON_TOL * max(1.0, float(np.max(np.abs(cs.p))))
        for _ in range(NEWTON_MAXITER):
            r = self.dL_dv(cs.t, cs.q, v) - cs.p
            if np.max(np.abs(r)) <= tol:
                return State(cs.t, cs.q.copy(), v)
            lu_piv = self._factor_hessian(State(cs.t, cs.q, v))
            v = v - lu_solve(lu_piv, r)
        raise NoConvergence(
            f"inverse fiber derivative did not converge at t={cs.t:.6g}")

    def hamiltonian_field(self, cs: CoState, v0=None):
        """(dq, dp) of the momentum-side evolution field.

        Uses the exact identities dq = v(t, q, p) and dp = dL/dq
        evaluated at the recovered velocity; no differencing of any
        Hamiltonian. `v0` warm-starts the velocity recovery.
        """
        s = self.inverse_legendre(cs, v0=v0)
        return s.v.copy(), np.asarray(self.dL_dq(s.t, s.q, s.v), float).copy()

    # -- self-checks ------------------------------------------------------

    def derivative_consistency(self, states, rel_tol=1e-6):
        """Compare dL_dq/dL_dv against central differences of L.

        Returns the maximal relative deviation over `states`; raises
        nothing. Intended for model validation and tests.
        """
        worst = 0.0
        for s in states:
            scale = max(1.0, abs(self.lagrangian(s.t, s.q, s.v)))
            hq = FD_STEP * max(1.0, float(np.max(np.abs(s.q))))
            hv = FD_STEP * max(1.0, float(np.max(np.abs(s.v))))
            for j in range(self.dim):
                qp = s.q.copy(); qp[j] += hq
                qm = s.q.copy(); qm[j] -= hq
                fd = (self.lagrangian(s.t, qp, s.v)
                      - self.lagrangian(s.t, qm, s.v)) / (2*hq)
                worst = max(worst, abs(fd - self.dL_dq(s.t, s.q, s.v)[j]) / scale)
                vp = s.v.copy(); vp[j] += hv
                vm = s.v.copy(); vm[j] -= hv
                fd = (self.lagrangian(s.t, s.q, vp)
                      - self.lagrangian(s.t, s.q, vm)) / (2*hv)
                worst = max(worst, abs(fd - self.dL_dv(s.t, s.q, s.v)[j]) / scale)
        return worst

    # -- packing helpers used by the integrators --------------------------

    def pack(self, s: State) -> np.ndarray:
        return np.concatenate([s.q, s.v])

    def unpack(self, t: float, y: np.ndarray) -> State:
        return State(t, y[:self.dim], y[self.dim:])

    def rhs(self, t, y):
        """Packed evolution field y' = (v, a) for the ODE integrator."""
        dq, dv = self.evolution_field(self.unpack(t, y))
        return np.concatenate([dq, dv])


@dataclass
class FlowEquivalenceReport:
    """Outcome of the velocity-side vs momentum-side flow comparison."""

    passed: bool
    max_discrepancy: float
    tol: float
    t_span: tuple
    grid_size: int

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (f"flow equivalence: {status} "
                f"(max discrepancy {self.max_discrepancy:.3e}, tol {self.tol:.1e}, "
                f"t in [{self.t_span[0]:.3g}, {self.t_span[1]:.3g}])")


def check_flow_equivalence(sys: LagrangianSystem, s0: State, t_end: float,
                           tol: float = 1e-6, rtol: float = DEFAULT_RTOL,
                           atol: float = DEFAULT_ATOL) -> FlowEquivalenceReport:
    """Integrate both evolution fields and compare them under the fiber
    derivative.

    The velocity-side field is integrated from s0 and the momentum-side
    field from its fiber-derivative image, with identical step control.
    The report holds the maximum over the union of both step grids of
    the componentwise difference between the mapped velocity-side state
    and the momentum-side state. Assumes no guard crossings occur.
    """
    if t_end < s0.t:
        raise ValueError("t_end must be >= s0.t")
    if t_end == s0.t:
        return FlowEquivalenceReport(True, 0.0, tol, (s0.t, t_end), 1)

    sol_l = integrate_smooth(sys.rhs, s0.t, sys.pack(s0), t_end,
                             rtol=rtol, atol=atol)

    cs0 = sys.legendre(s0)
    warm = {"v": s0.v.copy()}

    def rhs_h(t, y):
        cs = CoState(t, y[:sys.dim], y[sys.dim:])
        dq, dp = sys.hamiltonian_field(cs, v0=warm["v"])
        warm["v"] = dq
        return np.concatenate([dq, dp])

    sol_h = integrate_smooth(rhs_h, cs0.t, np.concatenate([cs0.q, cs0.p]),
                             t_end, rtol=rtol, atol=atol)

    grid = np.union1d(sol_l.times, sol_h.times)
    worst = 0.0
    for t in grid:
        yl = sol_l(t)
        yh = sol_h(t)
        mapped = sys.legendre(sys.unpack(t, yl))
        worst = max(worst,
                    float(np.max(np.abs(mapped.q - yh[:sys.dim]))),
                    float(np.max(np.abs(mapped.p - yh[sys.dim:]))))
    return FlowEquivalenceReport(worst <= tol, worst, tol, (s0.t, t_end),
                                 len(grid))
