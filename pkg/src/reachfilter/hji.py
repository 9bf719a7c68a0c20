"""Grid-based solver for the final-value Hamilton-Jacobi-Isaacs variational inequality.

The value function is integrated backward from ``V(x, T) = l(x)`` with a
global Lax-Friedrichs numerical Hamiltonian, second-order TVD Runge-Kutta
time stepping, and ``V <- min(V, l)`` after every step. Each step is also
capped by the previous one: the exact value function only decreases as the
horizon grows, and the cap stops the linear-extrapolation edge closure from
breaking that near non-periodic grid edges.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .grid import (GradientMode, GridDef, ScalarField, _cell_weights,
                   interpolate_many, one_sided_differences, sample_function)
from .models import DisturbanceShape, DynamicsModel, TargetFunction

log = logging.getLogger(__name__)


class Mode(str, Enum):
    LIVENESS = "liveness"
    SAFETY = "safety"


class SolverError(RuntimeError):
    """Numerical failure during a solve (non-finite values)."""


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.5
    dissipation: str = "global_lax_friedrichs"
    convergence_tol: float = 1e-3
    convergence_band: float | None = None
    max_horizon: float = 1.0
    store_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.cfl <= 0.9:
            raise ValueError(f"cfl must lie in (0, 0.9], got {self.cfl}")
        if self.dissipation != "global_lax_friedrichs":
            raise ValueError(f"unsupported dissipation {self.dissipation!r}")
        if self.max_horizon < 0:
            raise ValueError("max_horizon must be non-negative")
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")


# ---------------------------------------------------------------------------
# Hamiltonian


def _extremal(coef: np.ndarray, lo: np.ndarray, hi: np.ndarray, minimize: bool) -> np.ndarray:
    """Per-axis minimiser (or maximiser) of ``coef . v`` over a box; ties give 0 clipped to the box."""
    neg, pos = (hi, lo) if minimize else (lo, hi)
    tie = np.clip(0.0, lo, hi)
    return np.where(coef > 0, pos, np.where(coef < 0, neg, tie))


def optimal_control(model: DynamicsModel, beta: np.ndarray, mode: Mode) -> np.ndarray:
    """Bang-bang control from the switching vector ``beta = p . f2``.

    Liveness minimises ``beta . u``; safety maximises it.
    """
    return _extremal(beta, model.u_lo, model.u_hi, minimize=Mode(mode) is Mode.LIVENESS)


def optimal_disturbance(model: DynamicsModel, gamma: np.ndarray, mode: Mode) -> np.ndarray:
    """Worst-case disturbance from ``gamma = p . f3``; the disturbance opposes the control."""
    maximize = Mode(mode) is Mode.LIVENESS
    if model.disturbance_shape is DisturbanceShape.NONE:
        return np.zeros(gamma.shape[:-1] + (0,))
    if model.disturbance_shape is DisturbanceShape.BOX:
        db = model.disturbance_bound
        return _extremal(gamma, db[:, 0], db[:, 1], minimize=not maximize)
    r = model.disturbance_bound
    norm = np.linalg.norm(gamma, axis=-1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    d = np.where(norm > 0, r * gamma / safe, 0.0)
    return d if maximize else -d


def hamiltonian(model: DynamicsModel, x, p, mode: Mode | str):
    """Return ``(H, u_opt, d_opt)`` for costate ``p`` at state ``x`` (batched over leading axes)."""
    mode = Mode(mode)
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    f1, f2, f3 = model.affine_parts(x)
    return _hamiltonian_parts(model, f1, f2, f3, p, mode)


def _hamiltonian_parts(model, f1, f2, f3, p, mode):
    beta = np.einsum("...i,...ij->...j", p, f2)
    gamma = np.einsum("...i,...ij->...j", p, f3)
    u = optimal_control(model, beta, mode)
    d = optimal_disturbance(model, gamma, mode)
    H = np.einsum("...i,...i->...", p, f1) + np.einsum("...j,...j->...", beta, u)
    if model.disturbance_dim:
        H = H + np.einsum("...j,...j->...", gamma, d)
    return H, u, d


# ---------------------------------------------------------------------------
# Value function container


@dataclass(eq=False)
class ValueFunction:
    """Time-stamped value function slices, stored in ascending time.

    For liveness, ``slices[-1]`` is the terminal slice ``l`` at ``times[-1] = T``.
    For safety, ``slices[0]`` is the (converged) slice used by the filters.
    """

    grid: GridDef
    times: np.ndarray
    slices: list[ScalarField]
    mode: Mode
    converged: bool = False
    target: TargetFunction | None = None
    model: DynamicsModel | None = None
    steps: int = 0
    _stacked: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.times) != len(self.slices) or len(self.slices) == 0:
            raise ValueError("times and slices must be non-empty and of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly ascending")

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    def values_array(self) -> np.ndarray:
        """All slices as one array of shape ``(len(times),) + grid.shape``."""
        if self._stacked is None:
            self._stacked = np.stack([s.values for s in self.slices])
        return self._stacked

    def _time_bracket(self, t: float | None) -> tuple[int, int, float]:
        times = self.times
        if t is None or len(times) == 1:
            return 0, 0, 0.0
        t = min(max(float(t), times[0]), times[-1])
        i = int(np.searchsorted(times, t, side="right")) - 1
        i = min(max(i, 0), len(times) - 2)
        w = (t - times[i]) / (times[i + 1] - times[i])
        return i, i + 1, w

    def effective_time(self, t: float | None) -> float | None:
        """Safety filters always read the converged (earliest) slice."""
        return float(self.times[0]) if self.mode is Mode.SAFETY else t

    def query(self, x, t: float | None, gradient_mode: GradientMode | str = GradientMode.CENTRAL):
        """Return ``(V, grad V, D_t V)`` at a single state, interpolated in space and time."""
        x = np.asarray(x, dtype=float)
        gradient_mode = GradientMode(gradient_mode)
        i0, i1, w = self._time_bracket(t)
        lo_idx, hi_idx, cw = _cell_weights(self.grid, x)
        v0, g0 = _corner_eval(self.slices[i0], lo_idx, hi_idx, cw, gradient_mode)
        if i1 == i0:
            return v0, g0, 0.0
        v1, g1 = _corner_eval(self.slices[i1], lo_idx, hi_idx, cw, gradient_mode)
        dt = self.times[i1] - self.times[i0]
        return (1 - w) * v0 + w * v1, (1 - w) * g0 + w * g1, (v1 - v0) / dt

    def value(self, x, t: float | None = None) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        i0, i1, w = self._time_bracket(t)
        v0 = self.slices[i0](x)
        if i1 == i0 or w == 0.0:
            return v0
        return (1 - w) * v0 + w * self.slices[i1](x)

    __call__ = value

    def gradient(self, x, t: float | None = None, mode: GradientMode | str = GradientMode.CENTRAL) -> np.ndarray:
        return self.query(x, t, mode)[1]


def _corner_eval(field_: ScalarField, lo_idx, hi_idx, w, mode):
    grads = field_.node_gradient(mode)
    n = field_.grid.ndim
    v = 0.0
    g = np.zeros(n)
    for corner in range(1 << n):
        weight = 1.0
        idx = []
        for i in range(n):
            if corner >> i & 1:
                weight *= w[i]
                idx.append(hi_idx[i])
            else:
                weight *= 1.0 - w[i]
                idx.append(lo_idx[i])
        if weight == 0.0:
            continue
        idx = tuple(idx)
        v += weight * field_.values[idx]
        g += weight * grads[idx]
    return float(v), g


def time_gradient(vf: ValueFunction, x, t: float) -> float:
    """Finite difference of ``V`` across the stored time slices bracketing ``t``."""
    i0, i1, _ = vf._time_bracket(t)
    if i0 == i1:
        return 0.0
    x = np.asarray(x, dtype=float)
    return (vf.slices[i1](x) - vf.slices[i0](x)) / (vf.times[i1] - vf.times[i0])


def brt_contains(vf: ValueFunction, x, t: float | None = None) -> bool | np.ndarray:
    v = vf.value(x, vf.effective_time(t) if t is None else t)
    return v <= 0.0 if np.ndim(v) else bool(v <= 0.0)


def hji_residual(vf: ValueFunction, x, t: float, model: DynamicsModel | None = None,
                 target: TargetFunction | None = None,
                 gradient_mode: GradientMode | str = GradientMode.CENTRAL) -> float | np.ndarray:
    """``min{D_t V + H(x, grad V), l(x) - V}`` evaluated at one state or a batch of states."""
    model = model or vf.model
    target = target or vf.target
    if model is None or target is None:
        raise ValueError("hji_residual needs the model and target function")
    x = np.asarray(x, dtype=float)
    i0, i1, w = vf._time_bracket(t)
    v = vf.value(x, t)
    stack_grads = []
    for i in (i0, i1):
        stack_grads.append(interpolate_many(vf.grid, vf.slices[i].node_gradient(gradient_mode), x))
    grad = (1 - w) * stack_grads[0] + w * stack_grads[1]
    dtv = time_gradient(vf, x, t)
    H, _, _ = hamiltonian(model, x, grad, vf.mode)
    out = np.minimum(dtv + H, np.asarray(target(x)) - v)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Solver


def dissipation_coefficients(model: DynamicsModel, grid: GridDef) -> np.ndarray:
    """Per-axis bound on ``|dH/dp_i|`` over the grid and all admissible inputs."""
    bounds = model.speed_bounds(grid.points())
    return bounds.reshape(-1, grid.ndim).max(axis=0)


def stable_timestep(model: DynamicsModel, grid: GridDef, cfl: float) -> float:
    alpha = dissipation_coefficients(model, grid)
    rate = float(np.sum(alpha / grid.spacing))
    return math.inf if rate == 0 else cfl / rate


class _LaxFriedrichs:
    def __init__(self, model: DynamicsModel, grid: GridDef, mode: Mode):
        self.model = model
        self.grid = grid
        self.mode = mode
        pts = grid.points()
        self.f1, self.f2, self.f3 = model.affine_parts(pts)
        self.alpha = dissipation_coefficients(model, grid)

    def __call__(self, V: np.ndarray) -> np.ndarray:
        """Right-hand side of ``dV/dtau`` where ``tau = T - t``."""
        p_avg = np.empty(V.shape + (self.grid.ndim,))
        diss = np.zeros(V.shape)
        for i in range(self.grid.ndim):
            bwd, fwd = one_sided_differences(V, self.grid, i)
            p_avg[..., i] = 0.5 * (bwd + fwd)
            diss += 0.5 * self.alpha[i] * (fwd - bwd)
        H, _, _ = _hamiltonian_parts(self.model, self.f1, self.f2, self.f3, p_avg, self.mode)
        return H + diss


def solve(model: DynamicsModel, target: TargetFunction, grid: GridDef, mode: Mode | str,
          config: SolverConfig = SolverConfig()) -> ValueFunction:
    """Integrate the HJI variational inequality backward from ``T = config.max_horizon``.

    Liveness stores a slice every ``store_every`` steps. Safety stops as soon as
    the sup-norm change between consecutive steps (restricted to
    ``|V| <= convergence_band`` when a band is set) drops below
    ``convergence_tol`` and keeps the terminal, periodic and last two slices.
    """
    mode = Mode(mode)
    if grid.ndim != model.state_dim:
        raise ValueError(f"grid has {grid.ndim} dims but {model.name} has {model.state_dim} states")
    l_field = sample_function(grid, target, vectorized=True)
    l = l_field.values
    T = float(config.max_horizon)
    if T == 0.0:
        return ValueFunction(grid, np.array([0.0]), [l_field], mode, converged=False,
                             target=target, model=model)

    op = _LaxFriedrichs(model, grid, mode)
    dt_max = stable_timestep(model, grid, config.cfl)
    n_steps = max(1, math.ceil(T / dt_max - 1e-12))
    dt = T / n_steps
    log.info("solve %s %s: grid %s, %d steps of %.3g s", model.name, mode.value, grid.shape, n_steps, dt)

    stored_steps = [0]
    stored = [l.copy()]
    V = l.copy()
    converged = False
    prev = None
    k = 0
    for k in range(1, n_steps + 1):
        V1 = V + dt * op(V)
        V2 = V1 + dt * op(V1)
        V_new = np.minimum(np.minimum(0.5 * (V + V2), l), V)
        if not np.all(np.isfinite(V_new)):
            raise SolverError(f"non-finite value function at step {k}")
        prev, V = V, V_new
        if mode is Mode.SAFETY:
            change = np.abs(V - prev)
            if config.convergence_band is not None:
                band = (np.abs(V) <= config.convergence_band) | (np.abs(prev) <= config.convergence_band)
                change = change[band]
            converged = change.size == 0 or float(change.max()) < config.convergence_tol
        if k % config.store_every == 0 or k == n_steps or converged:
            if converged and stored_steps[-1] != k - 1:
                # keep the previous step so D_t V is available at the converged slice
                stored_steps.append(k - 1)
                stored.append(prev.copy())
            stored_steps.append(k)
            stored.append(V.copy())
        if converged:
            break

    times = (stored_steps[-1] - np.array(stored_steps[::-1], dtype=float)) * dt
    slices = [ScalarField(grid, v) for v in reversed(stored)]
    return ValueFunction(grid, times, slices, mode, converged=converged, target=target,
                         model=model, steps=k)


def sample_interior(grid: GridDef, n: int, rng: np.random.Generator, margin_cells: float = 1.0) -> np.ndarray:
    """Uniform samples at least ``margin_cells`` away from non-periodic edges."""
    lo = np.array(grid.lo, dtype=float)
    hi = np.array(grid.hi, dtype=float)
    for i, p in enumerate(grid.periodic):
        if not p:
            lo[i] += margin_cells * grid.spacing[i]
            hi[i] -= margin_cells * grid.spacing[i]
    return rng.uniform(lo, hi, size=(n, grid.ndim))
