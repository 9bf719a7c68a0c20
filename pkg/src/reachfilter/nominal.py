"""Sampling-based shooting MPC used as the (safety-unaware) nominal controller."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .models import DynamicsModel


class PriorKind(str, Enum):
    UNIFORM_BOX = "uniform"
    GAUSSIAN_AROUND_PREVIOUS = "gaussian"


@dataclass(frozen=True)
class RocketLandingCost:
    """Per step ``||(u_y, u_z)|| + sqrt((|y| - 20)^2 + (|z| - 20)^2)``.

    For ``vrocket2`` the lateral position and thrust are taken as zero.
    """

    pad: float = 20.0

    def stage(self, model: DynamicsModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if model.name == "vrocket2":
            y = np.zeros(x.shape[:-1])
            z = x[..., 0]
        else:
            y, z = x[..., 0], x[..., 1]
        effort = np.linalg.norm(u, axis=-1)
        return effort + np.hypot(np.abs(y) - self.pad, np.abs(z) - self.pad)


@dataclass(frozen=True)
class GoalDistanceCost:
    """Per step ``||x[dims] - goal|| + energy_weight * ||u||^2``; ``dims`` default to the leading states."""

    goal_center: tuple[float, ...]
    energy_weight: float = 0.0
    dims: tuple[int, ...] | None = None

    def stage(self, model: DynamicsModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        dims = self.dims if self.dims is not None else tuple(range(len(self.goal_center)))
        dist = np.linalg.norm(x[..., list(dims)] - np.asarray(self.goal_center), axis=-1)
        return dist + self.energy_weight * np.sum(u * u, axis=-1)


StageCost = RocketLandingCost | GoalDistanceCost


@dataclass(frozen=True)
class MpcConfig:
    cost: StageCost
    horizon_steps: int = 50
    dt: float = 0.01
    num_samples: int = 1024
    prior: PriorKind = PriorKind.UNIFORM_BOX
    sigma: float = 0.2  # Gaussian prior std as a fraction of each control range
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prior", PriorKind(self.prior))
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must fit in 64 unsigned bits")


@dataclass
class MpcState:
    """Replanning counter (drives the counter-based random stream) and warm-start plan."""

    step: int = 0
    previous: np.ndarray | None = field(default=None, repr=False)
    failed: bool = False


def _generator(seed: int, step: int) -> np.random.Generator:
    # the replanning index occupies the high counter word, so streams never overlap
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, step]))


def rollout_costs(model: DynamicsModel, x0, controls: np.ndarray, config: MpcConfig) -> np.ndarray:
    """Costs of a batch of control sequences, shape ``(S, H, m)`` -> ``(S,)``."""
    controls = np.asarray(controls, dtype=float)
    x = np.broadcast_to(np.asarray(x0, dtype=float), controls.shape[:1] + (model.state_dim,)).copy()
    total = np.zeros(controls.shape[0])
    with np.errstate(all="ignore"):
        for k in range(controls.shape[1]):
            u = controls[:, k]
            total += config.cost.stage(model, x, u)
            x = model.wrap_state(x + config.dt * model.eval(x, u))
        total[~np.isfinite(total)] = np.inf
    return total


def rollout_cost(model: DynamicsModel, x0, u_sequence, config: MpcConfig) -> float:
    """Forward-Euler rollout cost of one sequence of ``horizon_steps`` controls."""
    u_sequence = np.asarray(u_sequence, dtype=float).reshape(-1, model.control_dim)
    if u_sequence.shape[0] != config.horizon_steps:
        raise ValueError(f"sequence length {u_sequence.shape[0]} != horizon_steps {config.horizon_steps}")
    return float(rollout_costs(model, x0, u_sequence[None], config)[0])


def sample_sequences(model: DynamicsModel, config: MpcConfig, state: MpcState) -> np.ndarray:
    rng = _generator(config.rng_seed, state.step)
    lo, hi = model.u_lo, model.u_hi
    shape = (config.num_samples, config.horizon_steps, model.control_dim)
    if config.prior is PriorKind.UNIFORM_BOX or state.previous is None:
        return rng.uniform(lo, hi, size=shape)
    prev = state.previous
    centre = np.concatenate([prev[1:], prev[-1:]], axis=0)
    noise = rng.normal(size=shape) * (config.sigma * (hi - lo))
    noise[0] = 0.0  # keep the shifted previous plan as a candidate
    return np.clip(centre + noise, lo, hi)


def mpc_step(model: DynamicsModel, x, t: float, config: MpcConfig,
             state: MpcState | None = None) -> tuple[np.ndarray, MpcState]:
    """First control of the cheapest sampled sequence, plus the advanced state.

    ``t`` is accepted for interface symmetry; the stage costs are time-invariant.
    """
    state = state or MpcState()
    seqs = np.clip(sample_sequences(model, config, state), model.u_lo, model.u_hi)
    costs = rollout_costs(model, x, seqs, config)
    best = int(np.argmin(costs))
    if not np.isfinite(costs[best]):
        u0 = model.clip_control(np.zeros(model.control_dim))
        return u0, replace(state, step=state.step + 1, previous=None, failed=True)
    plan = seqs[best]
    return plan[0].copy(), MpcState(step=state.step + 1, previous=plan, failed=False)
