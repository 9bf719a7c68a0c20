"""Control-affine dynamical systems and target functions.

Every model is written as ``f(x, u, d) = f1(x) + f2(x) u + f3(x) d``. All
state-dependent methods accept a single state of shape ``(n,)`` or a batch of
shape ``(..., n)``; the HJI solver evaluates them on the full grid at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class DimensionError(ValueError):
    """Raised when a state/control/disturbance vector has the wrong length."""


class DisturbanceShape(str, Enum):
    NONE = "none"
    BOX = "box"
    BALL = "ball"


@dataclass(frozen=True)
class RocketParams:
    g: float = 9.81
    alpha: float = 0.3
    thrust_bound: float = 250.0

    def __post_init__(self):
        if self.g <= 0:
            raise ValueError("gravity must be positive")
        if self.thrust_bound <= 0:
            raise ValueError("thrust bound must be positive")


def _zeros_like_batch(x: np.ndarray, *tail: int) -> np.ndarray:
    return np.zeros(x.shape[:-1] + tail, dtype=float)


@dataclass(frozen=True)
class DynamicsModel:
    """A control- and disturbance-affine system with box control bounds.

    ``disturbance_bound`` is an ``(k, 2)`` box for ``BOX`` or a scalar radius
    for ``BALL``. ``periodic_dims`` lists state indices with period 2*pi.
    """

    name: str
    state_dim: int
    control_dim: int
    disturbance_dim: int
    control_bounds: np.ndarray
    disturbance_shape: DisturbanceShape
    disturbance_bound: np.ndarray | float | None
    periodic_dims: frozenset[int]
    params: Mapping[str, float]
    _drift: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _control_matrix: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _disturbance_matrix: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __post_init__(self):
        cb = np.asarray(self.control_bounds, dtype=float).reshape(self.control_dim, 2)
        if np.any(cb[:, 0] >= cb[:, 1]):
            raise ValueError(f"{self.name}: control bounds need lo < hi on every axis")
        cb.setflags(write=False)
        object.__setattr__(self, "control_bounds", cb)
        if self.disturbance_shape is DisturbanceShape.BOX:
            db = np.asarray(self.disturbance_bound, dtype=float).reshape(self.disturbance_dim, 2)
            db.setflags(write=False)
            object.__setattr__(self, "disturbance_bound", db)
        elif self.disturbance_shape is DisturbanceShape.BALL:
            if float(self.disturbance_bound) < 0:
                raise ValueError("disturbance radius must be non-negative")
            object.__setattr__(self, "disturbance_bound", float(self.disturbance_bound))
        elif self.disturbance_dim != 0:
            raise ValueError("disturbance_dim must be 0 when the model has no disturbance")

    # -- shape checks -----------------------------------------------------
    def _state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.state_dim:
            raise DimensionError(f"{self.name}: expected state of length {self.state_dim}, got shape {x.shape}")
        return x

    def _vec(self, v, size: int, what: str, batch: tuple[int, ...]) -> np.ndarray:
        if v is None:
            v = np.zeros(size)
        v = np.asarray(v, dtype=float)
        if size == 0:
            return np.zeros(batch + (0,))
        if v.ndim == 0 or v.shape[-1] != size:
            raise DimensionError(f"{self.name}: expected {what} of length {size}, got shape {v.shape}")
        return v

    # -- dynamics -----------------------------------------------------------
    def affine_parts(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(f1, f2, f3)`` with shapes ``(..., n)``, ``(..., n, m)``, ``(..., n, k)``."""
        x = self._state(x)
        return self._drift(x), self._control_matrix(x), self._disturbance_matrix(x)

    def eval(self, x, u, d=None) -> np.ndarray:
        x = self._state(x)
        u = self._vec(u, self.control_dim, "control", x.shape[:-1])
        d = self._vec(d, self.disturbance_dim, "disturbance", x.shape[:-1])
        f1, f2, f3 = self.affine_parts(x)
        out = f1 + np.einsum("...ij,...j->...i", f2, u)
        if self.disturbance_dim:
            out = out + np.einsum("...ij,...j->...i", f3, d)
        return out

    __call__ = eval

    # -- bounds helpers -------------------------------------------------------
    @property
    def u_lo(self) -> np.ndarray:
        return self.control_bounds[:, 0]

    @property
    def u_hi(self) -> np.ndarray:
        return self.control_bounds[:, 1]

    def clip_control(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.u_lo, self.u_hi)

    def wrap_state(self, x) -> np.ndarray:
        """Map periodic coordinates into ``[-pi, pi)``."""
        x = np.array(x, dtype=float, copy=True)
        for i in self.periodic_dims:
            x[..., i] = (x[..., i] + math.pi) % TWO_PI - math.pi
        return x

    def speed_bounds(self, x) -> np.ndarray:
        """Per-axis bound on ``|f_i(x, u, d)|`` over admissible inputs, shape ``(..., n)``."""
        f1, f2, f3 = self.affine_parts(x)
        umax = np.max(np.abs(self.control_bounds), axis=1)
        out = np.abs(f1) + np.abs(f2) @ umax if self.control_dim else np.abs(f1)
        if self.disturbance_shape is DisturbanceShape.BOX:
            out = out + np.abs(f3) @ np.max(np.abs(self.disturbance_bound), axis=1)
        elif self.disturbance_shape is DisturbanceShape.BALL:
            out = out + self.disturbance_bound * np.linalg.norm(f3, axis=-1)
        return out

    def with_params(self, **overrides) -> "DynamicsModel":
        return make_model(self.name, **{**dict(self.params), **overrides})


# ---------------------------------------------------------------------------
# Registered models


def _dubins3(speed: float = 0.3, max_turn: float = 0.75) -> DynamicsModel:
    def drift(x):
        out = _zeros_like_batch(x, 3)
        # heading measured from +y: xdot = V sin(phi), ydot = V cos(phi)
        out[..., 0] = speed * np.sin(x[..., 2])
        out[..., 1] = speed * np.cos(x[..., 2])
        return out

    def ctrl(x):
        out = _zeros_like_batch(x, 3, 1)
        out[..., 2, 0] = 1.0
        return out

    return DynamicsModel(
        name="dubins3",
        state_dim=3,
        control_dim=1,
        disturbance_dim=0,
        control_bounds=np.array([[-max_turn, max_turn]]),
        disturbance_shape=DisturbanceShape.NONE,
        disturbance_bound=None,
        periodic_dims=frozenset({2}),
        params={"speed": speed, "max_turn": max_turn},
        _drift=drift,
        _control_matrix=ctrl,
        _disturbance_matrix=lambda x: _zeros_like_batch(x, 3, 0),
    )


def _blimp4(speed: float = 2.0, max_climb: float = 1.0, max_turn: float = math.pi,
            dstb_radius: float = 0.5) -> DynamicsModel:
    def drift(x):
        out = _zeros_like_batch(x, 4)
        out[..., 0] = speed * np.cos(x[..., 3])
        out[..., 1] = speed * np.sin(x[..., 3])
        return out

    def ctrl(x):
        out = _zeros_like_batch(x, 4, 2)
        out[..., 2, 0] = 1.0
        out[..., 3, 1] = 1.0
        return out

    def dstb(x):
        out = _zeros_like_batch(x, 4, 2)
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        return out

    return DynamicsModel(
        name="blimp4",
        state_dim=4,
        control_dim=2,
        disturbance_dim=2,
        control_bounds=np.array([[-max_climb, max_climb], [-max_turn, max_turn]]),
        disturbance_shape=DisturbanceShape.BALL,
        disturbance_bound=dstb_radius,
        periodic_dims=frozenset({3}),
        params={"speed": speed, "max_climb": max_climb, "max_turn": max_turn, "dstb_radius": dstb_radius},
        _drift=drift,
        _control_matrix=ctrl,
        _disturbance_matrix=dstb,
    )


def _rocket6(g: float = 9.81, alpha: float = 0.3, thrust_bound: float = 250.0) -> DynamicsModel:
    p = RocketParams(g=g, alpha=alpha, thrust_bound=thrust_bound)

    def drift(x):
        out = _zeros_like_batch(x, 6)
        out[..., 0:3] = x[..., 3:6]
        out[..., 4] = -p.g
        return out

    def ctrl(x):
        c, s = np.cos(x[..., 2]), np.sin(x[..., 2])
        out = _zeros_like_batch(x, 6, 2)
        out[..., 3, 0] = c
        out[..., 3, 1] = -s
        out[..., 4, 0] = s
        out[..., 4, 1] = c
        out[..., 5, 0] = p.alpha
        return out

    b = p.thrust_bound
    return DynamicsModel(
        name="rocket6",
        state_dim=6,
        control_dim=2,
        disturbance_dim=0,
        control_bounds=np.array([[-b, b], [-b, b]]),
        disturbance_shape=DisturbanceShape.NONE,
        disturbance_bound=None,
        periodic_dims=frozenset({2}),
        params={"g": p.g, "alpha": p.alpha, "thrust_bound": p.thrust_bound},
        _drift=drift,
        _control_matrix=ctrl,
        _disturbance_matrix=lambda x: _zeros_like_batch(x, 6, 0),
    )


def _vrocket2(g: float = 9.81, thrust_bound: float = 250.0) -> DynamicsModel:
    """Vertical channel of the rocket: state (z, zdot), control vertical thrust."""

    def drift(x):
        out = _zeros_like_batch(x, 2)
        out[..., 0] = x[..., 1]
        out[..., 1] = -g
        return out

    def ctrl(x):
        out = _zeros_like_batch(x, 2, 1)
        out[..., 1, 0] = 1.0
        return out

    return DynamicsModel(
        name="vrocket2",
        state_dim=2,
        control_dim=1,
        disturbance_dim=0,
        control_bounds=np.array([[-thrust_bound, thrust_bound]]),
        disturbance_shape=DisturbanceShape.NONE,
        disturbance_bound=None,
        periodic_dims=frozenset(),
        params={"g": g, "thrust_bound": thrust_bound},
        _drift=drift,
        _control_matrix=ctrl,
        _disturbance_matrix=lambda x: _zeros_like_batch(x, 2, 0),
    )


MODEL_REGISTRY: dict[str, Callable[..., DynamicsModel]] = {
    "dubins3": _dubins3,
    "blimp4": _blimp4,
    "rocket6": _rocket6,
    "vrocket2": _vrocket2,
}


def make_model(name: str, **params) -> DynamicsModel:
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODEL_REGISTRY)}") from None
    return factory(**params)


def eval_dynamics(model: DynamicsModel, x, u, d=None) -> np.ndarray:
    return model.eval(x, u, d)


def affine_parts(model: DynamicsModel, x):
    return model.affine_parts(x)


# ---------------------------------------------------------------------------
# Target functions


class TargetKind(str, Enum):
    RECTANGLE_BAND = "rectangle_band"
    SPHERE_UNION = "sphere_union"
    GOAL_SPHERE = "goal_sphere"
    CUSTOM = "custom"


@dataclass(frozen=True)
class TargetFunction:
    """Lipschitz function ``l`` whose sub-zero level set is the target set.

    RECTANGLE_BAND: ``dims`` index the state coordinates; ``lower``/``upper``
    give the box, and ``symmetric`` axes use ``|x_i|`` against ``upper``.
    The value is ``max_i`` of the per-axis slack, as in the landing-pad target.
    SPHERE_UNION / GOAL_SPHERE: ``centers`` (s, len(dims)), ``radii`` (s,);
    value is the minimum over spheres of distance-to-center minus radius.
    """

    kind: TargetKind
    dims: tuple[int, ...]
    centers: np.ndarray | None = None
    radii: np.ndarray | None = None
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None
    symmetric: tuple[bool, ...] | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if self.kind is TargetKind.CUSTOM:
            out = self.func(x)
        elif self.kind is TargetKind.RECTANGLE_BAND:
            terms = []
            for i, d in enumerate(self.dims):
                xi = x[..., d]
                if self.symmetric and self.symmetric[i]:
                    terms.append(np.abs(xi) - self.upper[i])
                else:
                    terms.append(xi - self.upper[i])
                    terms.append(self.lower[i] - xi)
            out = np.max(np.stack(terms, axis=-1), axis=-1)
        else:
            pos = x[..., list(self.dims)]
            dist = np.linalg.norm(pos[..., None, :] - self.centers, axis=-1) - self.radii
            out = np.min(dist, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def contains(self, x) -> bool | np.ndarray:
        return np.asarray(self(x)) <= 0.0


def target_value(tf: TargetFunction, x) -> float | np.ndarray:
    return tf(x)


def rectangle_band(dims: Sequence[int], lower: Sequence[float], upper: Sequence[float],
                   symmetric: Sequence[bool] | None = None) -> TargetFunction:
    dims = tuple(int(d) for d in dims)
    sym = tuple(bool(s) for s in symmetric) if symmetric is not None else (False,) * len(dims)
    return TargetFunction(TargetKind.RECTANGLE_BAND, dims, lower=tuple(map(float, lower)),
                          upper=tuple(map(float, upper)), symmetric=sym)


def sphere_union(dims: Sequence[int], centers, radii, kind: TargetKind = TargetKind.SPHERE_UNION) -> TargetFunction:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if centers.shape != (radii.size, len(dims)):
        raise ValueError(f"centers shape {centers.shape} does not match {radii.size} radii in {len(dims)} dims")
    centers.setflags(write=False)
    radii.setflags(write=False)
    return TargetFunction(kind, tuple(int(d) for d in dims), centers=centers, radii=radii)


def goal_sphere(dims: Sequence[int], center, radius: float) -> TargetFunction:
    return sphere_union(dims, [center], [radius], kind=TargetKind.GOAL_SPHERE)


def rocket_landing_target() -> TargetFunction:
    """``max{|y| - 20, z - 20, -z}`` on the rocket's (y, z) coordinates."""
    return rectangle_band(dims=(0, 1), lower=(-20.0, 0.0), upper=(20.0, 20.0), symmetric=(True, False))


def vertical_landing_target() -> TargetFunction:
    """``max{z - 20, -z}`` for the vertical rocket."""
    return rectangle_band(dims=(0,), lower=(0.0,), upper=(20.0,))
