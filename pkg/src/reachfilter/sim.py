"""Closed-loop simulation under a filtered nominal controller, and the comparison metrics."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .filters import Branch, FilterKind, FilterSpec, apply_filter, linearize
from .grid import DomainError, GridDef
from .hji import Mode, SolverConfig, ValueFunction, optimal_control
from .models import DisturbanceShape, DynamicsModel, TargetFunction
from .nominal import MpcConfig, MpcState, mpc_step


class Baseline(str, Enum):
    """Controllers run without a filter."""

    NOMINAL_ONLY = "nominal"
    DEFAULT_ONLY = "default"


class DisturbanceKind(str, Enum):
    NONE = "none"
    WORST_CASE = "worst_case"
    CONSTANT = "constant"
    SEEDED_RANDOM = "random"


@dataclass(frozen=True)
class DisturbancePolicy:
    kind: DisturbanceKind = DisturbanceKind.NONE
    vector: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", DisturbanceKind(self.kind))


class Termination(str, Enum):
    HORIZON_END = "horizon_end"
    REACHED_TARGET = "reached_target"
    LEFT_GRID = "left_grid"


@dataclass(frozen=True)
class Scenario:
    model: DynamicsModel
    target: TargetFunction
    grid: GridDef
    problem: Mode
    controller: FilterSpec | Baseline
    nominal: MpcConfig | None
    x0: np.ndarray
    sim_dt: float
    duration: float
    solver: SolverConfig = SolverConfig()
    disturbance: DisturbancePolicy = DisturbancePolicy()
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "problem", Mode(self.problem))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if not self.sim_dt > 0:
            raise ValueError("sim_dt must be positive")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.x0.shape != (self.model.state_dim,):
            raise ValueError(f"x0 must have {self.model.state_dim} entries")
        if not self.grid.contains(self.x0):
            raise ValueError(f"x0 {self.x0.tolist()} lies outside the grid")
        if isinstance(self.controller, FilterSpec) and self.controller.problem is not self.problem:
            raise ValueError("filter problem does not match the scenario problem")
        if self.controller is not Baseline.DEFAULT_ONLY and self.nominal is None:
            raise ValueError("a nominal controller is required unless running the default controller")

    def with_controller(self, controller: FilterSpec | Baseline) -> "Scenario":
        return replace(self, controller=controller)


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    value: np.ndarray
    branch: list[str]
    active: np.ndarray
    step_ns: np.ndarray
    fallback: np.ndarray
    termination: Termination

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class MetricsReport:
    label: str
    termination: str
    steps: int
    min_signed_distance: float
    final_signed_distance: float
    min_value: float
    total_cost: float
    mean_step_compute_ns: float
    max_step_compute_ns: int
    control_energy: float
    jerk_energy: float
    qp_fallback_count: int
    filter_active_steps: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _controller_label(controller: FilterSpec | Baseline) -> str:
    return controller.label if isinstance(controller, FilterSpec) else controller.value


class _Disturbance:
    def __init__(self, model: DynamicsModel, policy: DisturbancePolicy):
        self.model = model
        self.policy = policy
        k = model.disturbance_dim
        if policy.kind is DisturbanceKind.CONSTANT:
            v = np.asarray(policy.vector, dtype=float)
            if v.shape != (k,):
                raise ValueError(f"constant disturbance needs {k} entries")
            self.constant = self._project(v)

    def _project(self, d: np.ndarray) -> np.ndarray:
        m = self.model
        if m.disturbance_shape is DisturbanceShape.BOX:
            return np.clip(d, m.disturbance_bound[:, 0], m.disturbance_bound[:, 1])
        if m.disturbance_shape is DisturbanceShape.BALL:
            n = np.linalg.norm(d)
            return d if n <= m.disturbance_bound else d * (m.disturbance_bound / n)
        return d

    def __call__(self, step: int, d_star: np.ndarray | None) -> np.ndarray:
        m, kind = self.model, self.policy.kind
        if m.disturbance_dim == 0 or kind is DisturbanceKind.NONE:
            return np.zeros(m.disturbance_dim)
        if kind is DisturbanceKind.CONSTANT:
            return self.constant
        if kind is DisturbanceKind.WORST_CASE:
            return np.zeros(m.disturbance_dim) if d_star is None else np.asarray(d_star, dtype=float)
        rng = np.random.Generator(np.random.Philox(key=self.policy.seed, counter=[0, 0, 0, step]))
        if m.disturbance_shape is DisturbanceShape.BOX:
            return rng.uniform(m.disturbance_bound[:, 0], m.disturbance_bound[:, 1])
        # uniform in the ball
        v = rng.normal(size=m.disturbance_dim)
        v *= m.disturbance_bound * rng.uniform() ** (1.0 / m.disturbance_dim) / max(np.linalg.norm(v), 1e-300)
        return v


def _worst_disturbance(vf, model, x, t, problem, gradient_mode):
    try:
        *_, d_star = linearize(vf, model, x, t, gradient_mode)
    except DomainError:
        return None
    return d_star


def _value(vf: ValueFunction, x, t) -> float:
    try:
        return float(vf.value(x, vf.effective_time(t)))
    except DomainError:
        return float("nan")


def simulate(scenario: Scenario, vf: ValueFunction) -> tuple[TrajectoryRecord, MetricsReport]:
    """Forward-Euler closed loop; the nominal MPC is replanned at its own ``dt`` (zero-order hold)."""
    sc = scenario
    model, dt = sc.model, sc.sim_dt
    if vf.grid.shape != sc.grid.shape or vf.grid.ndim != model.state_dim:
        raise ValueError("value function grid does not match the scenario")
    n_steps = int(round(sc.duration / dt))
    if abs(n_steps * dt - sc.duration) > 1e-9 * max(1.0, sc.duration):
        n_steps = int(np.floor(sc.duration / dt + 1e-9))
    replan = max(1, int(round(sc.nominal.dt / dt))) if sc.nominal is not None else 1
    controller = sc.controller
    spec = controller if isinstance(controller, FilterSpec) else None
    gradient_mode = spec.gradient_mode if spec else "central"
    disturbance = _Disturbance(model, sc.disturbance)
    liveness = sc.problem is Mode.LIVENESS

    ts, xs, us, ds, vals, branches, actives, nss, falls = [], [], [], [], [], [], [], [], []
    mpc_state = MpcState()
    u_nom = None
    x = sc.x0.copy()
    termination = Termination.HORIZON_END
    for k in range(n_steps + 1):
        t = k * dt
        if not sc.grid.contains(x):
            termination = Termination.LEFT_GRID
            break
        if sc.nominal is not None and k % replan == 0:
            u_nom, mpc_state = mpc_step(model, x, t, sc.nominal, mpc_state)
        d_star = None
        if spec is not None:
            res = apply_filter(vf, model, spec, u_nom, x, t)
            u, branch, active, ns, fb = res.u, res.branch.value, res.active, res.compute_ns, res.fallback
            value = res.value if np.isfinite(res.value) else _value(vf, x, t)
            d_star = res.d_star if res.d_star.size else None
        elif controller is Baseline.DEFAULT_ONLY:
            t0 = time.perf_counter_ns()
            *_, beta, d_star = linearize(vf, model, x, t, gradient_mode)
            u = optimal_control(model, beta, sc.problem)
            ns = time.perf_counter_ns() - t0
            branch, active, fb, value = Branch.DEFAULT_OPTIMAL.value, True, False, _value(vf, x, t)
        else:
            u, branch, active, ns, fb = model.clip_control(u_nom), Branch.NOMINAL.value, False, 0, False
            value = _value(vf, x, t)
        if d_star is None and sc.disturbance.kind is DisturbanceKind.WORST_CASE:
            d_star = _worst_disturbance(vf, model, x, t, sc.problem, gradient_mode)
        d = disturbance(k, d_star)
        ts.append(t), xs.append(x.copy()), us.append(np.asarray(u, dtype=float)), ds.append(d)
        vals.append(value), branches.append(branch), actives.append(bool(active))
        nss.append(int(ns)), falls.append(bool(fb))
        if liveness and float(sc.target(x)) <= 0.0:
            termination = Termination.REACHED_TARGET
            break
        if k == n_steps:
            break
        x = model.wrap_state(x + dt * model.eval(x, u, d))
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at t={t + dt:g}")

    m, kd = model.control_dim, model.disturbance_dim
    rec = TrajectoryRecord(
        t=np.array(ts), x=np.array(xs).reshape(len(ts), model.state_dim),
        u=np.array(us).reshape(len(ts), m), d=np.array(ds).reshape(len(ts), kd), value=np.array(vals), branch=branches,
        active=np.array(actives, dtype=bool), step_ns=np.array(nss, dtype=np.int64),
        fallback=np.array(falls, dtype=bool), termination=termination)
    return rec, compute_metrics(sc, rec)


def compute_metrics(scenario: Scenario, rec: TrajectoryRecord) -> MetricsReport:
    dt = scenario.sim_dt
    # controls at rows 0..n-2 were applied over an interval; the last row's was not
    applied = rec.u[:-1]
    dist = np.asarray(scenario.target(rec.x), dtype=float).reshape(-1)
    control_energy = float(np.sum(applied * applied) * dt)
    du = np.diff(applied, axis=0) / dt
    jerk_energy = float(np.sum(du * du) * dt)
    if scenario.nominal is not None and len(applied):
        total_cost = float(np.sum(scenario.nominal.cost.stage(scenario.model, rec.x[:-1], applied)))
    else:
        total_cost = 0.0
    timed = rec.step_ns if isinstance(scenario.controller, FilterSpec) or \
        scenario.controller is Baseline.DEFAULT_ONLY else np.zeros(0, dtype=np.int64)
    finite_v = rec.value[np.isfinite(rec.value)]
    return MetricsReport(
        label=_controller_label(scenario.controller),
        termination=rec.termination.value,
        steps=len(rec) - 1,
        min_signed_distance=float(dist.min()),
        final_signed_distance=float(dist[-1]),
        min_value=float(finite_v.min()) if finite_v.size else float("nan"),
        total_cost=total_cost,
        mean_step_compute_ns=float(timed.mean()) if timed.size else 0.0,
        max_step_compute_ns=int(timed.max()) if timed.size else 0,
        control_energy=control_energy,
        jerk_energy=jerk_energy,
        qp_fallback_count=int(rec.fallback.sum()),
        filter_active_steps=int(rec.active.sum()),
    )


def compare_filters(scenario: Scenario, vf: ValueFunction,
                    controllers: list[FilterSpec | Baseline]) -> list[MetricsReport]:
    return [simulate(scenario.with_controller(c), vf)[1] for c in controllers]


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    total_cost: float
    normalized_cost: float
    metrics: MetricsReport = field(repr=False)


def gamma_sweep(scenario: Scenario, vf: ValueFunction, gammas: list[float],
                gradient_mode: str = "central") -> list[SweepRow]:
    """Blending filter per ``gamma``; costs normalised by the pure default-controller run."""
    base = simulate(scenario.with_controller(Baseline.DEFAULT_ONLY), vf)[1]
    if base.total_cost <= 0:
        raise ValueError("default-controller run has non-positive cost; cannot normalise")
    ctrl = scenario.controller
    epsilon = ctrl.epsilon if isinstance(ctrl, FilterSpec) else 0.0
    rows = []
    for g in gammas:
        spec = FilterSpec(FilterKind.SMOOTH_BLENDING, scenario.problem, gamma=float(g),
                          epsilon=epsilon, gradient_mode=gradient_mode)
        rep = simulate(scenario.with_controller(spec), vf)[1]
        rows.append(SweepRow(float(g), rep.total_cost, rep.total_cost / base.total_cost, rep))
    return rows
