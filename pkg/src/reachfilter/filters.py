"""Live/safe control sets and the projection filters built on them.

All three filters solve ``min ||u - u_nom||^2`` over a subset of the
admissible controls that keeps the value function from crossing zero:

* least restrictive: nominal inside, the bang-bang default at the boundary;
* smooth least restrictive: nominal inside, a projection onto the
  ``dV/dt = 0`` hyperplane at the boundary;
* smooth blending: at every step, a projection onto the half-space that
  bounds ``dV/dt`` by ``-gamma * V``.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import DomainError, GradientMode
from .hji import Mode, ValueFunction, optimal_control, optimal_disturbance
from .models import DynamicsModel

DEFAULT_BAND = 1e-3
_DEGENERATE_BETA = 1e-12


class SetKind(str, Enum):
    ALL = "all"
    HYPERPLANE = "hyperplane"
    EMPTY = "empty"


class Sense(str, Enum):
    EQUALITY = "equality"
    AT_MOST = "at_most"  # alpha + beta . u <= 0


class FilterKind(str, Enum):
    LEAST_RESTRICTIVE = "lr"
    SMOOTH_LEAST_RESTRICTIVE = "slr"
    SMOOTH_BLENDING = "blending"


class Branch(str, Enum):
    NOMINAL = "nominal"
    DEFAULT_OPTIMAL = "default"
    QP_PROJECTION = "qp"


class QPInfeasible(ValueError):
    """The linear constraint does not intersect the control box."""


@dataclass(frozen=True)
class ControlSet:
    kind: SetKind
    alpha: float
    beta: np.ndarray
    value: float
    grad: np.ndarray
    dtv: float
    d_star: np.ndarray
    sense: Sense = Sense.EQUALITY
    degenerate: bool = False
    outside_grid: bool = False


@dataclass(frozen=True)
class FilterSpec:
    kind: FilterKind
    problem: Mode
    gamma: float = 0.0
    epsilon: float = 0.0
    gradient_mode: GradientMode = GradientMode.CENTRAL
    band: float = DEFAULT_BAND

    def __post_init__(self):
        object.__setattr__(self, "kind", FilterKind(self.kind))
        object.__setattr__(self, "problem", Mode(self.problem))
        object.__setattr__(self, "gradient_mode", GradientMode(self.gradient_mode))
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon is a |V| margin and must be >= 0")
        if self.band < 0:
            raise ValueError("band must be >= 0")

    @property
    def label(self) -> str:
        if self.kind is FilterKind.SMOOTH_BLENDING:
            return f"blending(gamma={self.gamma:g})"
        return f"{self.kind.value}(eps={self.epsilon:g})"


@dataclass
class FilterResult:
    u: np.ndarray
    active: bool
    branch: Branch
    qp_iterations: int = 0
    compute_ns: int = 0
    fallback: bool = False
    value: float = float("nan")
    d_star: np.ndarray = field(default_factory=lambda: np.zeros(0))


# ---------------------------------------------------------------------------
# control sets


def _empty_set(model: DynamicsModel, value: float = float("nan")) -> ControlSet:
    return ControlSet(SetKind.EMPTY, float("nan"), np.zeros(model.control_dim), value,
                      np.zeros(model.state_dim), 0.0, np.zeros(model.disturbance_dim), outside_grid=True)


def linearize(vf: ValueFunction, model: DynamicsModel, x, t: float | None,
              gradient_mode: GradientMode | str = GradientMode.CENTRAL):
    """Return ``(V, grad V, D_t V, alpha, beta, d*)`` at ``(x, t)``.

    ``dV/dt`` under the worst-case disturbance equals ``alpha + beta . u``.
    Safety value functions are treated as converged: ``D_t V`` is dropped.
    """
    x = np.asarray(x, dtype=float)
    t_eff = vf.effective_time(t)
    v, grad, dtv = vf.query(x, t_eff, gradient_mode)
    if vf.mode is Mode.SAFETY:
        dtv = 0.0
    f1, f2, f3 = model.affine_parts(x)
    d_star = optimal_disturbance(model, grad @ f3, vf.mode)
    alpha = dtv + grad @ f1
    if model.disturbance_dim:
        alpha += grad @ (f3 @ d_star)
    beta = grad @ f2
    return v, grad, dtv, float(alpha), beta, d_star


def classify_controls(vf: ValueFunction, model: DynamicsModel, x, t: float | None,
                      gradient_mode: GradientMode | str = GradientMode.CENTRAL,
                      band: float = DEFAULT_BAND) -> ControlSet:
    try:
        v, grad, dtv, alpha, beta, d_star = linearize(vf, model, x, t, gradient_mode)
    except DomainError:
        return _empty_set(model)
    inside = -v if vf.mode is Mode.LIVENESS else v  # positive means strictly permitted
    if inside > band:
        kind = SetKind.ALL
    elif inside < -band:
        kind = SetKind.EMPTY
    else:
        kind = SetKind.HYPERPLANE
    degenerate = kind is SetKind.HYPERPLANE and float(np.linalg.norm(beta)) <= _DEGENERATE_BETA
    return ControlSet(kind, alpha, beta, v, grad, dtv, d_star, degenerate=degenerate)


def bang_bang(beta: np.ndarray, bounds: np.ndarray, problem: Mode | str) -> np.ndarray:
    """Extremal control: minimise ``beta . u`` (liveness) or maximise it (safety)."""
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    beta = np.asarray(beta, dtype=float)
    minimize = Mode(problem) is Mode.LIVENESS
    lo, hi = bounds[:, 0], bounds[:, 1]
    neg, pos = (hi, lo) if minimize else (lo, hi)
    return np.where(beta > 0, pos, np.where(beta < 0, neg, np.clip(0.0, lo, hi)))


def default_optimal_control(vf: ValueFunction, model: DynamicsModel, x, t: float | None,
                            problem: Mode | str | None = None,
                            gradient_mode: GradientMode | str = GradientMode.CENTRAL) -> np.ndarray:
    problem = Mode(problem) if problem is not None else vf.mode
    _, _, _, _, beta, _ = linearize(vf, model, x, t, gradient_mode)
    return optimal_control(model, beta, problem)


# ---------------------------------------------------------------------------
# box-constrained projection onto a hyperplane / half-space


@dataclass(frozen=True)
class QPSolution:
    u: np.ndarray
    cost: float
    iterations: int


def qp_project(u_nom, alpha: float, beta, sense: Sense | str, bounds, tol: float = 1e-9) -> QPSolution:
    """Exact minimiser of ``||u - u_nom||^2`` s.t. ``alpha + beta . u (= or <=) 0`` and the box.

    The unconstrained hyperplane projection is tried first; otherwise every
    assignment of free / lower / upper to the coordinates is solved as an
    equality-constrained projection and the cheapest box-feasible one wins.
    """
    sense = Sense(sense)
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lo, hi = bounds[:, 0], bounds[:, 1]
    beta = np.asarray(beta, dtype=float).reshape(-1)
    u_nom = np.asarray(u_nom, dtype=float).reshape(-1)
    scale = tol * (1.0 + abs(alpha) + float(np.abs(beta) @ np.maximum(np.abs(lo), np.abs(hi))))

    # the box projection is optimal whenever it already satisfies an inequality;
    # otherwise the constraint is active at the optimum and both senses are the same problem
    u_box = np.clip(u_nom, lo, hi)
    if sense is Sense.AT_MOST and alpha + beta @ u_box <= scale:
        return QPSolution(u_box, float(np.sum((u_box - u_nom) ** 2)), 0)

    iterations = 1
    bb = float(beta @ beta)
    if bb > 0.0:
        cand = u_nom - ((alpha + beta @ u_nom) / bb) * beta
        if np.all(cand >= lo - scale) and np.all(cand <= hi + scale):
            cand = np.clip(cand, lo, hi)
            return QPSolution(cand, float(np.sum((cand - u_nom) ** 2)), iterations)

    best = None
    m = beta.size
    for assign in itertools.product((0, 1, 2), repeat=m):
        if all(a == 0 for a in assign) and bb > 0.0:
            continue  # already tried above
        iterations += 1
        u = u_nom.copy()
        fixed = np.array([a != 0 for a in assign])
        u[fixed] = np.where(np.array(assign)[fixed] == 1, lo[fixed], hi[fixed])
        free = ~fixed
        rhs = -alpha - beta[fixed] @ u[fixed]
        bf = beta[free]
        bfb = float(bf @ bf)
        if bfb > 0.0:
            u[free] = u_nom[free] + ((rhs - bf @ u_nom[free]) / bfb) * bf
        elif abs(rhs) > scale:
            continue
        if np.any(u < lo - scale) or np.any(u > hi + scale):
            continue
        u = np.clip(u, lo, hi)
        if abs(alpha + beta @ u) > scale * 10:
            continue
        cost = float(np.sum((u - u_nom) ** 2))
        if best is None or cost < best[1] - 1e-15:
            best = (u, cost)
    if best is None:
        raise QPInfeasible(f"constraint {alpha:+.6g} + {beta.tolist()} . u = 0 misses the control box")
    return QPSolution(best[0], best[1], iterations)


# ---------------------------------------------------------------------------
# filters


def _result(u, active, branch, t0, iterations=0, fallback=False, value=float("nan"), d_star=None):
    return FilterResult(np.asarray(u, dtype=float), active, branch, iterations,
                        time.perf_counter_ns() - t0, fallback, value,
                        np.zeros(0) if d_star is None else d_star)


def _interior(value: float, problem: Mode, margin: float) -> bool:
    return value < -margin if problem is Mode.LIVENESS else value > margin


def filter_lr(vf, model, spec: FilterSpec, u_nom, x, t) -> FilterResult:
    t0 = time.perf_counter_ns()
    try:
        v, _, _, _, beta, d_star = linearize(vf, model, x, t, spec.gradient_mode)
    except DomainError:
        return _result(model.clip_control(u_nom), False, Branch.NOMINAL, t0, fallback=True)
    if _interior(v, spec.problem, spec.epsilon):
        return _result(model.clip_control(u_nom), False, Branch.NOMINAL, t0, value=v, d_star=d_star)
    outside = not _interior(v, spec.problem, -spec.band)
    return _result(optimal_control(model, beta, spec.problem), True, Branch.DEFAULT_OPTIMAL, t0,
                   fallback=outside, value=v, d_star=d_star)


def filter_smooth_lr(vf, model, spec: FilterSpec, u_nom, x, t) -> FilterResult:
    """Raises :class:`QPInfeasible` when the boundary hyperplane misses the box."""
    t0 = time.perf_counter_ns()
    try:
        v, _, _, alpha, beta, d_star = linearize(vf, model, x, t, spec.gradient_mode)
    except DomainError:
        return _result(model.clip_control(u_nom), False, Branch.NOMINAL, t0, fallback=True)
    if _interior(v, spec.problem, spec.epsilon):
        return _result(model.clip_control(u_nom), False, Branch.NOMINAL, t0, value=v, d_star=d_star)
    if not _interior(v, spec.problem, -spec.band) or np.linalg.norm(beta) <= _DEGENERATE_BETA:
        # past the boundary, or no control authority over dV/dt
        return _result(optimal_control(model, beta, spec.problem), True, Branch.DEFAULT_OPTIMAL, t0,
                       fallback=True, value=v, d_star=d_star)
    sol = qp_project(u_nom, alpha, beta, Sense.EQUALITY, model.control_bounds)
    return _result(sol.u, True, Branch.QP_PROJECTION, t0, sol.iterations, value=v, d_star=d_star)


def blending_constraint(alpha: float, beta: np.ndarray, value: float, gamma: float,
                        problem: Mode) -> tuple[float, np.ndarray]:
    """Rewrite the blending condition as ``a + b . u <= 0``."""
    if Mode(problem) is Mode.LIVENESS:
        # D_t V + grad V . f <= -gamma V
        return alpha + gamma * value, beta
    # grad V . f >= -gamma V
    return -alpha - gamma * value, -beta


def filter_smooth_blending(vf, model, spec: FilterSpec, u_nom, x, t) -> FilterResult:
    """Raises :class:`QPInfeasible` once the state has overshot into the forbidden region."""
    t0 = time.perf_counter_ns()
    try:
        v, _, _, alpha, beta, d_star = linearize(vf, model, x, t, spec.gradient_mode)
    except DomainError:
        return _result(model.clip_control(u_nom), False, Branch.NOMINAL, t0, fallback=True)
    a, b = blending_constraint(alpha, beta, v, spec.gamma, spec.problem)
    sol = qp_project(u_nom, a, b, Sense.AT_MOST, model.control_bounds)
    active = sol.iterations > 0 and not np.array_equal(sol.u, model.clip_control(u_nom))
    return _result(sol.u, active, Branch.QP_PROJECTION if active else Branch.NOMINAL, t0,
                   sol.iterations, value=v, d_star=d_star)


_DISPATCH = {
    FilterKind.LEAST_RESTRICTIVE: filter_lr,
    FilterKind.SMOOTH_LEAST_RESTRICTIVE: filter_smooth_lr,
    FilterKind.SMOOTH_BLENDING: filter_smooth_blending,
}


def apply_filter(vf: ValueFunction, model: DynamicsModel, spec: FilterSpec, u_nom, x, t) -> FilterResult:
    """Run the filter named by ``spec``; an infeasible QP falls back to the default control, flagged."""
    t0 = time.perf_counter_ns()
    try:
        return _DISPATCH[spec.kind](vf, model, spec, u_nom, x, t)
    except QPInfeasible:
        v, _, _, _, beta, d_star = linearize(vf, model, x, t, spec.gradient_mode)
        return _result(optimal_control(model, beta, spec.problem), True, Branch.DEFAULT_OPTIMAL, t0,
                       fallback=True, value=v, d_star=d_star)
