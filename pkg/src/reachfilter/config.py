"""Scenario files: YAML documents with sections model/target/grid/solver/filter/nominal/sim.

Every section is validated against a fixed key set; unknown keys and bad
values raise :class:`ConfigError` naming the offending key path.

Defaults (keys that may be omitted)::

    model:   params {}
    target:  problem liveness; dims [0, 1, ...]; symmetric all false
    grid:    periodic false (periodic dims default to lo -pi, hi pi)
    solver:  horizon 1.0, cfl 0.5, convergence_tol 1e-3,
             convergence_band null, store_every 1
    filter:  kind lr, gamma 0, epsilon 0, gradient_mode central, band 1e-3
    nominal: horizon_steps 50, dt 0.01, num_samples 1024, prior uniform,
             sigma 0.2, seed 0; cost.energy_weight 0
    sim:     dt 0.01, duration 10, disturbance {kind none, vector [], seed 0}
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .filters import FilterKind, FilterSpec
from .grid import GridDef, GradientMode
from .hji import Mode, SolverConfig
from .models import TargetFunction, goal_sphere, make_model, rectangle_band, sphere_union
from .nominal import GoalDistanceCost, MpcConfig, PriorKind, RocketLandingCost
from .sim import Baseline, DisturbanceKind, DisturbancePolicy, Scenario


class ConfigError(ValueError):
    """Invalid scenario document; the message starts with the key path."""


_SECTIONS = {"name", "model", "target", "grid", "solver", "filter", "nominal", "sim"}


def _check_keys(d: Any, path: str, allowed: set[str], required: set[str] = frozenset()) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(d).__name__}")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{path + '.' if path else ''}{k}: unknown key (allowed: {', '.join(sorted(allowed))})")
    for k in required:
        if k not in d:
            raise ConfigError(f"{path + '.' if path else ''}{k}: required key missing")
    return d


def _num(v: Any, path: str, *, positive=False, nonneg=False, integer=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and not float(v).is_integer():
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be > 0")
    if nonneg and v < 0:
        raise ConfigError(f"{path}: must be >= 0")
    return int(v) if integer else float(v)


def _vec(v: Any, path: str, length: int | None = None) -> list[float]:
    if not isinstance(v, (list, tuple)):
        raise ConfigError(f"{path}: expected a list, got {v!r}")
    out = [_num(x, f"{path}[{i}]") for i, x in enumerate(v)]
    if length is not None and len(out) != length:
        raise ConfigError(f"{path}: expected {length} entries, got {len(out)}")
    return out


def _enum(cls, v: Any, path: str):
    try:
        return cls(v)
    except ValueError:
        raise ConfigError(f"{path}: {v!r} is not one of {[e.value for e in cls]}") from None


@dataclass(frozen=True)
class ScenarioFile:
    """Parsed scenario plus the pieces needed to re-run it."""

    name: str
    scenario: Scenario
    raw: dict

    @property
    def solver(self) -> SolverConfig:
        return self.scenario.solver

    def override(self, *, seed: int | None = None, dt: float | None = None) -> "ScenarioFile":
        sc = self.scenario
        if seed is not None and sc.nominal is not None:
            sc = replace(sc, nominal=replace(sc.nominal, rng_seed=seed))
        if seed is not None and sc.disturbance.kind is DisturbanceKind.SEEDED_RANDOM:
            sc = replace(sc, disturbance=replace(sc.disturbance, seed=seed))
        if dt is not None:
            if not dt > 0:
                raise ConfigError("--dt: must be > 0")
            sc = replace(sc, sim_dt=float(dt))
        return replace(self, scenario=sc)


def _parse_target(d, state_dim: int) -> tuple[TargetFunction, Mode]:
    p = "target"
    _check_keys(d, p, {"kind", "problem", "dims", "centers", "radii", "center", "radius",
                       "lower", "upper", "symmetric"}, {"kind"})
    problem = _enum(Mode, d.get("problem", "liveness"), f"{p}.problem")
    kind = d["kind"]
    dims = d.get("dims")
    if dims is not None:
        if not isinstance(dims, list) or not dims:
            raise ConfigError(f"{p}.dims: expected a non-empty list of state indices")
        dims = [_num(x, f"{p}.dims[{i}]", integer=True, nonneg=True) for i, x in enumerate(dims)]
        for i, x in enumerate(dims):
            if x >= state_dim:
                raise ConfigError(f"{p}.dims[{i}]: index {x} out of range for {state_dim} states")
    if kind == "sphere_union":
        if "centers" not in d or "radii" not in d:
            raise ConfigError(f"{p}: sphere_union needs centers and radii")
        centers = d["centers"]
        if not isinstance(centers, list) or not centers:
            raise ConfigError(f"{p}.centers: expected a non-empty list")
        k = len(dims) if dims else len(centers[0]) if isinstance(centers[0], list) else 0
        dims = dims or list(range(k))
        cs = [_vec(c, f"{p}.centers[{i}]", len(dims)) for i, c in enumerate(centers)]
        rs = _vec(d["radii"], f"{p}.radii", len(cs))
        if any(r <= 0 for r in rs):
            raise ConfigError(f"{p}.radii: must be > 0")
        return sphere_union(dims, cs, rs), problem
    if kind == "goal_sphere":
        if "center" not in d or "radius" not in d:
            raise ConfigError(f"{p}: goal_sphere needs center and radius")
        dims = dims or list(range(len(d["center"]) if isinstance(d["center"], list) else 0))
        c = _vec(d["center"], f"{p}.center", len(dims))
        return goal_sphere(dims, c, _num(d["radius"], f"{p}.radius", positive=True)), problem
    if kind == "rectangle_band":
        if "lower" not in d or "upper" not in d:
            raise ConfigError(f"{p}: rectangle_band needs lower and upper")
        dims = dims or list(range(len(d["lower"]) if isinstance(d["lower"], list) else 0))
        lo = _vec(d["lower"], f"{p}.lower", len(dims))
        hi = _vec(d["upper"], f"{p}.upper", len(dims))
        sym = d.get("symmetric", [False] * len(dims))
        if not isinstance(sym, list) or len(sym) != len(dims) or not all(isinstance(s, bool) for s in sym):
            raise ConfigError(f"{p}.symmetric: expected {len(dims)} booleans")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not a <= b:
                raise ConfigError(f"{p}.lower[{i}]: must be <= upper")
        return rectangle_band(dims, lo, hi, sym), problem
    raise ConfigError(f"{p}.kind: {kind!r} is not one of ['goal_sphere', 'rectangle_band', 'sphere_union']")


def _parse_grid(d, state_dim: int, periodic_dims) -> GridDef:
    _check_keys(d, "grid", {"dims"}, {"dims"})
    dims = d["dims"]
    if not isinstance(dims, list) or len(dims) != state_dim:
        raise ConfigError(f"grid.dims: expected {state_dim} entries (one per state)")
    rows = []
    for i, e in enumerate(dims):
        p = f"grid.dims[{i}]"
        _check_keys(e, p, {"count", "lo", "hi", "periodic"}, {"count"})
        periodic = e.get("periodic", False)
        if not isinstance(periodic, bool):
            raise ConfigError(f"{p}.periodic: expected a boolean")
        if periodic != (i in periodic_dims):
            raise ConfigError(f"{p}.periodic: state {i} is {'' if i in periodic_dims else 'not '}an angle for this model")
        count = _num(e["count"], f"{p}.count", integer=True)
        if count < 3:
            raise ConfigError(f"{p}.count: need at least 3 points")
        if not periodic and ("lo" not in e or "hi" not in e):
            raise ConfigError(f"{p}: lo and hi are required on non-periodic dims")
        lo = _num(e.get("lo", -math.pi), f"{p}.lo")
        hi = _num(e.get("hi", math.pi), f"{p}.hi")
        if not lo < hi:
            raise ConfigError(f"{p}.lo: must be < hi")
        rows.append((count, lo, hi, periodic))
    return GridDef.build(rows)


def _parse_solver(d) -> SolverConfig:
    p = "solver"
    _check_keys(d, p, {"horizon", "cfl", "convergence_tol", "convergence_band", "store_every"})
    band = d.get("convergence_band")
    cfl = _num(d.get("cfl", 0.5), f"{p}.cfl", positive=True)
    if cfl > 0.9:
        raise ConfigError(f"{p}.cfl: must be <= 0.9")
    return SolverConfig(
        cfl=cfl,
        convergence_tol=_num(d.get("convergence_tol", 1e-3), f"{p}.convergence_tol", positive=True),
        convergence_band=None if band is None else _num(band, f"{p}.convergence_band", positive=True),
        max_horizon=_num(d.get("horizon", 1.0), f"{p}.horizon", nonneg=True),
        store_every=_num(d.get("store_every", 1), f"{p}.store_every", integer=True, positive=True),
    )


def parse_controller(d, problem: Mode, path: str = "filter") -> FilterSpec | Baseline:
    _check_keys(d, path, {"kind", "gamma", "epsilon", "gradient_mode", "band"})
    kind = d.get("kind", "lr")
    if kind in (b.value for b in Baseline):
        extra = set(d) - {"kind"}
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}: not used by the {kind!r} controller")
        return Baseline(kind)
    kind = _enum(FilterKind, kind, f"{path}.kind")
    gamma = _num(d.get("gamma", 0.0), f"{path}.gamma", nonneg=True)
    if "gamma" in d and kind is not FilterKind.SMOOTH_BLENDING:
        raise ConfigError(f"{path}.gamma: only used by the blending filter")
    return FilterSpec(kind, problem, gamma=gamma,
                      epsilon=_num(d.get("epsilon", 0.0), f"{path}.epsilon", nonneg=True),
                      gradient_mode=_enum(GradientMode, d.get("gradient_mode", "central"), f"{path}.gradient_mode"),
                      band=_num(d.get("band", 1e-3), f"{path}.band", nonneg=True))


def _parse_nominal(d, model) -> MpcConfig:
    p = "nominal"
    _check_keys(d, p, {"horizon_steps", "dt", "num_samples", "prior", "sigma", "seed", "cost"}, {"cost"})
    c = _check_keys(d["cost"], f"{p}.cost", {"kind", "goal_center", "energy_weight", "dims"}, {"kind"})
    if c["kind"] == "rocket_landing":
        extra = set(c) - {"kind"}
        if extra:
            raise ConfigError(f"{p}.cost.{sorted(extra)[0]}: not used by rocket_landing")
        if model.name not in ("rocket6", "vrocket2"):
            raise ConfigError(f"{p}.cost.kind: rocket_landing needs a rocket model, not {model.name}")
        cost = RocketLandingCost()
    elif c["kind"] == "goal_distance":
        if "goal_center" not in c:
            raise ConfigError(f"{p}.cost.goal_center: required key missing")
        goal = _vec(c["goal_center"], f"{p}.cost.goal_center")
        dims = c.get("dims")
        if dims is not None:
            dims = tuple(_num(x, f"{p}.cost.dims[{i}]", integer=True, nonneg=True) for i, x in enumerate(dims))
            if len(dims) != len(goal) or max(dims) >= model.state_dim:
                raise ConfigError(f"{p}.cost.dims: must index {len(goal)} states")
        elif len(goal) > model.state_dim:
            raise ConfigError(f"{p}.cost.goal_center: longer than the state")
        cost = GoalDistanceCost(tuple(goal), _num(c.get("energy_weight", 0.0), f"{p}.cost.energy_weight", nonneg=True), dims)
    else:
        raise ConfigError(f"{p}.cost.kind: {c['kind']!r} is not one of ['goal_distance', 'rocket_landing']")
    seed = _num(d.get("seed", 0), f"{p}.seed", integer=True, nonneg=True)
    if seed >= 2**64:
        raise ConfigError(f"{p}.seed: must fit in 64 bits")
    return MpcConfig(
        cost=cost,
        horizon_steps=_num(d.get("horizon_steps", 50), f"{p}.horizon_steps", integer=True, positive=True),
        dt=_num(d.get("dt", 0.01), f"{p}.dt", positive=True),
        num_samples=_num(d.get("num_samples", 1024), f"{p}.num_samples", integer=True, positive=True),
        prior=_enum(PriorKind, d.get("prior", "uniform"), f"{p}.prior"),
        sigma=_num(d.get("sigma", 0.2), f"{p}.sigma", nonneg=True),
        rng_seed=seed,
    )


def _parse_disturbance(d, model) -> DisturbancePolicy:
    p = "sim.disturbance"
    _check_keys(d, p, {"kind", "vector", "seed"})
    kind = _enum(DisturbanceKind, d.get("kind", "none"), f"{p}.kind")
    vector = ()
    if kind is DisturbanceKind.CONSTANT:
        vector = tuple(_vec(d.get("vector", []), f"{p}.vector", model.disturbance_dim))
    seed = _num(d.get("seed", 0), f"{p}.seed", integer=True, nonneg=True)
    return DisturbancePolicy(kind, vector, seed)


def parse_scenario(doc: Any) -> ScenarioFile:
    _check_keys(doc, "", _SECTIONS, {"model", "target", "grid"})
    m = _check_keys(doc["model"], "model", {"name", "params"}, {"name"})
    params = m.get("params", {}) or {}
    _check_keys(params, "model.params", set(params))
    try:
        model = make_model(m["name"], **{k: _num(v, f"model.params.{k}") for k, v in params.items()})
    except KeyError as e:
        raise ConfigError(f"model.name: {e.args[0]}") from None
    except TypeError as e:
        raise ConfigError(f"model.params: {e}") from None
    target, problem = _parse_target(doc["target"], model.state_dim)
    grid = _parse_grid(doc["grid"], model.state_dim, model.periodic_dims)
    solver = _parse_solver(doc.get("solver", {}) or {})
    controller = parse_controller(doc.get("filter", {}) or {}, problem)
    nominal = _parse_nominal(doc["nominal"], model) if doc.get("nominal") is not None else None
    s = _check_keys(doc.get("sim", {}) or {}, "sim", {"x0", "dt", "duration", "disturbance"})
    x0 = _vec(s["x0"], "sim.x0", model.state_dim) if "x0" in s else [
        0.5 * (lo + hi) for lo, hi in zip(grid.lo, grid.hi)]
    if not grid.contains(np.array(x0)):
        raise ConfigError("sim.x0: lies outside the grid")
    if controller is not Baseline.DEFAULT_ONLY and nominal is None:
        raise ConfigError("nominal: required unless filter.kind is 'default'")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ConfigError("name: expected a string")
    sim_dt = _num(s.get("dt", 0.01), "sim.dt", positive=True)
    duration = _num(s.get("duration", 10.0), "sim.duration", nonneg=True)
    disturbance = _parse_disturbance(s.get("disturbance", {}) or {}, model)
    try:
        scenario = Scenario(
            model=model, target=target, grid=grid, problem=problem, controller=controller,
            nominal=nominal, x0=np.array(x0), sim_dt=sim_dt, duration=duration, solver=solver,
            disturbance=disturbance, name=name)
    except ValueError as e:
        raise ConfigError(f"scenario: {e}") from None
    return ScenarioFile(name, scenario, doc)


def load_scenario(path: str | Path) -> ScenarioFile:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML ({e})") from None
    return parse_scenario(doc)
