"""Planar billiard with a circular wall of time-varying radius and
velocity-proportional friction.

Off the wall the particle obeys m*qddot = -c*qdot, which is generated by
the exponentially weighted kinetic Lagrangian

    L(t, q, v) = exp(c t / m) * m |v|^2 / 2.

The wall is the circle |q|^2 = f(t); a crossing is an impact when the
admissibility function is non-negative. Two admissibility conventions
are provided:

* ``co-moving`` (default): the particle approaches the wall in the
  co-moving sense, d = 2 q.v - fdot >= 0. This equals d/dt(|q|^2 - f)
  and is well defined for growing and shrinking walls alike.
* ``outward``: the lab-frame condition q.v >= 0 (the particle heads
  outward), which is only adequate when the wall grows.

The elastic reset reflects the wall-normal velocity in the frame of the
moving wall. In the polar chart the angular coordinate is cyclic, the
damped angular momentum exp(ct/m) m r^2 thetadot is conserved between
impacts, and the radial reset takes the inward square root by default
(``polar_reset_sign='inward'``); ``'chart'`` instead matches the sign of
the Cartesian reset image, which differs only for grazing impacts on a
wall that grows faster than the particle recedes.

The closed-form damped flight makes an exact piecewise reference flow
possible: between impacts positions follow q(t) = q0 + (m/c) v0 (1 -
exp(-c dt/m)), and impact times are roots of the convex function
|q(t)|^2 - f(t) along each flight, bracketed through its derivative and
refined with Brent's method. The reference run applies the same reset,
admissibility and termination rules as the executor but involves no ODE
stepping, so it is an independent oracle for the whole hybrid pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ChartSingularity, InvalidStart, NegativeDiscriminant
from .hybrid import (TERM_HORIZON, TERM_MAX_IMPACTS, TERM_ZENO, Arc,
                     Event, Guard, HybridFlow, HybridSystem, ResetMap,
                     SimOptions)
from .lagrangian import LagrangianSystem, State
from .reduction import CyclicStructure

DISCRIMINANT_CLAMP = 1e-12


def default_wall(t):
    """Wall law used by the built-in scenarios."""
    return 2.0 - math.exp(t / 10.0)


def default_wall_rate(t):
    return -math.exp(t / 10.0) / 10.0


def static_wall(radius_sq=1.0):
    """Constant wall |q|^2 = radius_sq, for tests and toy runs."""
    return (lambda t: radius_sq), (lambda t: 0.0)


@dataclass(frozen=True)
class BilliardParams:
    """Physical and numerical parameters of the billiard.

    wall and wall_rate must be supplied together; the rate is never
    obtained by differencing the wall law.
    """

    m: float = 1.0
    c: float = 0.25
    wall: Callable[[float], float] = default_wall
    wall_rate: Callable[[float], float] = default_wall_rate
    direction_mode: str = "co-moving"       # or "outward"
    polar_reset_sign: str = "inward"        # or "chart"
    r_min: float = 1e-8

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if self.c < 0:
            raise ValueError("dissipation coefficient must be >= 0")
        if self.direction_mode not in ("co-moving", "outward"):
            raise ValueError(f"unknown direction_mode {self.direction_mode!r}")
        if self.polar_reset_sign not in ("inward", "chart"):
            raise ValueError(f"unknown polar_reset_sign "
                             f"{self.polar_reset_sign!r}")


# ---------------------------------------------------------------------------
# chart maps
# ---------------------------------------------------------------------------

def polar_to_cartesian(s: State) -> State:
    """(r, theta, rdot, thetadot) -> (x, y, xdot, ydot)."""
    r, th = s.q
    rd, thd = s.v
    ct, st = math.cos(th), math.sin(th)
    return State(s.t, np.array([r * ct, r * st]),
                 np.array([rd * ct - r * thd * st,
                           rd * st + r * thd * ct]))


def cartesian_to_polar(s: State) -> State:
    """(x, y, xdot, ydot) -> (r, theta, rdot, thetadot). Needs r > 0."""
    x, y = s.q
    xd, yd = s.v
    r = math.hypot(x, y)
    if r == 0.0:
        raise ChartSingularity("polar chart undefined at the origin")
    th = math.atan2(y, x)
    return State(s.t, np.array([r, th]),
                 np.array([(x * xd + y * yd) / r,
                           (x * yd - y * xd) / (r * r)]))


# ---------------------------------------------------------------------------
# Lagrangian systems
# ---------------------------------------------------------------------------

def cartesian_system(p: BilliardParams) -> LagrangianSystem:
    """Two-dimensional damped free particle in Cartesian coordinates."""
    m, c = p.m, p.c

    def lag(t, q, v):
        return math.exp(c * t / m) * 0.5 * m * float(v @ v)

    def dq(t, q, v):
        return np.zeros(2)

    def dv(t, q, v):
        return math.exp(c * t / m) * m * v

    def acc(t, q, v):
        return -(c / m) * v

    return LagrangianSystem(dim=2, lagrangian=lag, dL_dq=dq, dL_dv=dv,
                            acceleration=acc, coordinate_names=("x", "y"))


def polar_system(p: BilliardParams) -> LagrangianSystem:
    """The same particle in the polar chart (r > r_min)."""
    m, c, r_min = p.m, p.c, p.r_min

    def lag(t, q, v):
        r = q[0]
        return math.exp(c * t / m) * 0.5 * m * (v[0]**2 + r*r*v[1]**2)

    def dq(t, q, v):
        return np.array([math.exp(c * t / m) * m * q[0] * v[1]**2, 0.0])

    def dv(t, q, v):
        w = math.exp(c * t / m) * m
        return np.array([w * v[0], w * q[0]**2 * v[1]])

    def acc(t, q, v):
        r = q[0]
        if r <= 0.0:
            # trial extrapolation left the chart: force step rejection
            return np.array([np.nan, np.nan])
        if r <= r_min:
            raise ChartSingularity(
                f"trajectory reached r={r:.3e} <= r_min={r_min:.1e}")
        return np.array([r * v[1]**2 - (c / m) * v[0],
                         -2.0 * v[0] * v[1] / r - (c / m) * v[1]])

    return LagrangianSystem(dim=2, lagrangian=lag, dL_dq=dq, dL_dv=dv,
                            acceleration=acc, coordinate_names=("r", "theta"))


# ---------------------------------------------------------------------------
# guard and resets
# ---------------------------------------------------------------------------

def guard_cartesian(p: BilliardParams) -> Guard:
    f, fdot = p.wall, p.wall_rate

    def surface(s: State) -> float:
        return float(s.q @ s.q) - f(s.t)

    if p.direction_mode == "co-moving":
        def direction(s: State) -> float:
            return 2.0 * float(s.q @ s.v) - fdot(s.t)
    else:
        def direction(s: State) -> float:
            return float(s.q @ s.v)

    return Guard(surface=surface, direction=direction)


def guard_polar(p: BilliardParams) -> Guard:
    f, fdot = p.wall, p.wall_rate

    def surface(s: State) -> float:
        return s.q[0]**2 - f(s.t)

    if p.direction_mode == "co-moving":
        def direction(s: State) -> float:
            return 2.0 * s.q[0] * s.v[0] - fdot(s.t)
    else:
        def direction(s: State) -> float:
            return s.q[0] * s.v[0]

    return Guard(surface=surface, direction=direction)


def reset_cartesian(p: BilliardParams) -> ResetMap:
    f, fdot = p.wall, p.wall_rate

    def apply(s: State) -> State:
        lam = (fdot(s.t) - 2.0 * float(s.q @ s.v)) / f(s.t)
        return State(s.t, s.q.copy(), s.v + lam * s.q)

    return ResetMap(apply=apply)


def reset_polar(p: BilliardParams) -> ResetMap:
    f, fdot = p.wall, p.wall_rate
    chart_sign = p.polar_reset_sign == "chart"

    def apply(s: State) -> State:
        r = s.q[0]
        rd = s.v[0]
        ft, fd = f(s.t), fdot(s.t)
        a = (fd - 2.0 * r * rd) * r / ft
        rhs = rd * rd + (r / ft) * (fd - 2.0 * r * rd) * (2.0 * rd + a)
        if rhs < -DISCRIMINANT_CLAMP:
            raise NegativeDiscriminant(
                f"radial reset discriminant {rhs:.3e} < 0 at t={s.t:.6g}")
        root = math.sqrt(max(rhs, 0.0))
        if chart_sign:
            rd_post = math.copysign(root, fd / r - rd) if root > 0.0 else 0.0
        else:
            rd_post = -root
        return State(s.t, s.q.copy(), np.array([rd_post, s.v[1]]))

    return ResetMap(apply=apply)


def cartesian_hybrid(p: BilliardParams) -> HybridSystem:
    return HybridSystem(system=cartesian_system(p), guard=guard_cartesian(p),
                        reset=reset_cartesian(p))


def polar_hybrid(p: BilliardParams) -> HybridSystem:
    return HybridSystem(system=polar_system(p), guard=guard_polar(p),
                        reset=reset_polar(p))


# ---------------------------------------------------------------------------
# cyclic structure and reduced closed forms
# ---------------------------------------------------------------------------

def routhian_closed(p: BilliardParams, mu: float) -> LagrangianSystem:
    """Closed-form reduced system on the radial line at momentum mu:
    L_mu(t, r, rdot) = exp(ct/m) m rdot^2 / 2 - mu^2 exp(-ct/m) / (2 m r^2).
    """
    m, c, r_min = p.m, p.c, p.r_min

    def lag(t, x, xd):
        r = x[0]
        return (math.exp(c * t / m) * 0.5 * m * xd[0]**2
                - mu * mu / (2.0 * m * r * r) * math.exp(-c * t / m))

    def dq(t, x, xd):
        r = x[0]
        return np.array([mu * mu * math.exp(-c * t / m) / (m * r**3)])

    def dv(t, x, xd):
        return np.array([math.exp(c * t / m) * m * xd[0]])

    def acc(t, x, xd):
        r = x[0]
        if r <= 0.0:
            return np.array([np.nan])
        if r <= r_min:
            raise ChartSingularity(
                f"reduced trajectory reached r={r:.3e} <= r_min={r_min:.1e}")
        return np.array([mu * mu * math.exp(-2.0 * c * t / m) / (m * m * r**3)
                         - (c / m) * xd[0]])

    return LagrangianSystem(dim=1, lagrangian=lag, dL_dq=dq, dL_dv=dv,
                            acceleration=acc, coordinate_names=("r",))


def _validation_states(p: BilliardParams):
    """Deterministic state samples for the symmetry checks."""
    rng = np.random.default_rng(20240817)
    states, guard_states = [], []
    for _ in range(25):
        t = float(rng.uniform(0.0, 3.0))
        theta = float(rng.uniform(-math.pi, math.pi))
        r = float(rng.uniform(0.3, math.sqrt(max(p.wall(t), 0.09))))
        rd = float(rng.uniform(-3.0, 3.0))
        thd = float(rng.uniform(-4.0, 4.0))
        states.append(State(t, np.array([r, theta]), np.array([rd, thd])))
        r_g = math.sqrt(p.wall(t))
        guard_states.append(State(t, np.array([r_g, theta]),
                                  np.array([abs(rd) + 0.1, thd])))
    return tuple(states), tuple(guard_states)


def polar_cyclic(p: BilliardParams) -> CyclicStructure:
    """Cyclic structure of the polar chart (the angle is cyclic)."""
    m, c = p.m, p.c
    states, guard_states = _validation_states(p)

    def solver(t, x, xdot, mu):
        return math.exp(-c * t / m) * mu / (m * x[0] ** 2)

    def momentum(s: State) -> float:
        return math.exp(c * s.t / m) * m * s.q[0]**2 * s.v[1]

    return CyclicStructure(full=polar_hybrid(p), cyclic_index=1,
                           momentum=momentum,
                           cyclic_velocity_solver=solver,
                           routhian_factory=lambda mu: routhian_closed(p, mu),
                           sample_states=states,
                           guard_sample_states=guard_states)


# ---------------------------------------------------------------------------
# closed-form flight and the piecewise analytic reference
# ---------------------------------------------------------------------------

def analytic_arc(p: BilliardParams, s0: State, dt: float) -> State:
    """Damped free flight from s0 over dt (no impact in between):
    v(t) = v0 exp(-c dt/m), q(t) = q0 + (m/c) v0 (1 - exp(-c dt/m));
    straight uniform motion when c = 0.
    """
    if p.c == 0.0:
        return State(s0.t + dt, s0.q + dt * s0.v, s0.v.copy())
    decay = math.exp(-p.c * dt / p.m)
    return State(s0.t + dt, s0.q + (p.m / p.c) * s0.v * (1.0 - decay),
                 s0.v * decay)


class _FlightInterpolant:
    """Packed closed-form flight state as a function of absolute time."""

    def __init__(self, p: BilliardParams, t0, q0, v0):
        self.p = p
        self.t0 = t0
        self.q0 = np.asarray(q0, float)
        self.v0 = np.asarray(v0, float)

    def __call__(self, t):
        s = analytic_arc(self.p, State(self.t0, self.q0, self.v0), t - self.t0)
        return np.concatenate([s.q, s.v])


def reference_flow(p: BilliardParams, s0: State, t_end: float,
                   opts: Optional[SimOptions] = None,
                   grid_per_arc: int = 33) -> HybridFlow:
    """Exact piecewise reference run of the Cartesian billiard.

    Flights are closed-form; the next impact is the first root of
    phi(t) = |q(t)|^2 - f(t), which is convex along each flight for these
    walls, so the interior minimum is bracketed through phi' and the root
    refined with Brent's method. Resets, admissibility and the
    min_dwell / max_impacts termination rules mirror the executor, making
    the result directly comparable to `simulate` while sharing none of
    its numerics.
    """
    opts = opts or SimOptions()
    f, fdot = p.wall, p.wall_rate
    guard = guard_cartesian(p)
    reset = reset_cartesian(p)

    g0 = guard.surface(s0)
    if g0 > opts.guard_tol * max(1.0, abs(guard.direction(s0))):
        raise InvalidStart(f"reference start outside the wall (g={g0:.3e})")
    t, q, v = s0.t, s0.q.copy(), s0.v.copy()
    arcs: List[Arc] = []
    events: List[Event] = []
    termination = None

    while True:
        flight = _FlightInterpolant(p, t, q, v)

        def phi(s):
            y = flight(s)
            return float(y[:2] @ y[:2]) - f(s)

        def dphi(s):
            y = flight(s)
            return 2.0 * float(y[:2] @ y[2:]) - fdot(s)

        tau = _next_crossing(phi, dphi, t, t_end, opts.event_tol)
        if tau is not None:
            y = flight(tau)
            if guard.direction(State(tau, y[:2], y[2:])) < 0.0:
                # inadmissible crossing: the flight leaves the region and,
                # by convexity, never returns on this arc
                tau = None
        arc_end = tau if tau is not None else t_end
        times = np.linspace(t, arc_end, grid_per_arc)
        states = np.array([flight(tt) for tt in times])
        arcs.append(Arc(t, arc_end, times, states, flight))

        if tau is None:
            termination = TERM_HORIZON
            break
        if events and tau - events[-1].tau < opts.min_dwell:
            termination = TERM_ZENO
            break
        y = flight(tau)
        pre = State(tau, y[:2], y[2:])
        post = reset.apply(pre)
        events.append(Event(tau, pre, post, abs(guard.surface(pre))))
        if len(events) >= opts.max_impacts:
            termination = TERM_MAX_IMPACTS
            break
        t, q, v = tau, post.q, post.v

    return HybridFlow(arcs, events, termination, opts)


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PaperScenario:
    """Named parameter set with consistent polar and Cartesian starts."""

    scenario_id: str
    params: BilliardParams
    initial_polar: State
    initial_cartesian: State = field(default=None)
    horizon: float = 10.0

    def __post_init__(self):
        if self.initial_cartesian is None:
            object.__setattr__(self, "initial_cartesian",
                               polar_to_cartesian(self.initial_polar))

    @property
    def momentum(self) -> float:
        s = self.initial_polar
        p = self.params
        return math.exp(p.c * s.t / p.m) * p.m * s.q[0]**2 * s.v[1]


_REFERENCE_START_POLAR = State(0.0, np.array([0.5590, 1.1071]),
                               np.array([2.8621, -3.0400]))


def paper_scenarios() -> List[PaperScenario]:
    """The two bundled moving-wall runs (dissipation 0.25 and 0.10)."""
    return [
        PaperScenario("paper-c025", BilliardParams(c=0.25),
                      _REFERENCE_START_POLAR),
        PaperScenario("paper-c010", BilliardParams(c=0.10),
                      _REFERENCE_START_POLAR),
    ]


def get_scenario(scenario_id: str) -> PaperScenario:
    for sc in paper_scenarios():
        if sc.scenario_id == scenario_id:
            return sc
    raise KeyError(f"unknown scenario id {scenario_id!r}")


def _next_crossing(phi, dphi, t0, t_end, event_tol):
    """First upward root of a convex phi with phi(t0) <= 0 on (t0, t_end]."""
    if t_end <= t0:
        return None
    if dphi(t0) >= 0.0:
        # heading out from the start: at most one root ahead
        if phi(t_end) <= 0.0:
            return None
        if phi(t0) >= 0.0:
            # grazing exit at round-off level: the wall recaptures at once
            return t0
        lo = t0
    else:
        # phi decreases first; expand a bracket for the zero of dphi
        left = t0
        h = max(1e-12, 1e-12 * abs(t0))
        right = None
        while t0 + h < t_end:
            if dphi(t0 + h) > 0.0:
                right = t0 + h
                break
            left = t0 + h
            h *= 2.0
        if right is None:
            if dphi(t_end) <= 0.0:
                # still heading inward at the horizon: phi stays negative
                return None
            right = t_end
        t_min = float(brentq(dphi, left, right, xtol=1e-15, rtol=1e-15))
        if phi(t_min) >= 0.0:
            # dip never measurably re-enters: the wall caught the state
            return t_min
        if phi(t_end) <= 0.0:
            return None
        lo = t_min
    return float(brentq(phi, lo, t_end, xtol=min(event_tol, 1e-14),
                        rtol=1e-15))
