"""Uniform rectangular grids, sampled scalar fields, interpolation and gradients."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, NamedTuple, Sequence

import numpy as np

_SNAP = 1e-9


class DomainError(ValueError):
    """A query point lies outside the grid on a non-periodic dimension."""


class GradientMode(str, Enum):
    CENTRAL = "central"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class GridDef:
    counts: tuple[int, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    periodic: tuple[bool, ...]

    def __post_init__(self):
        nd = len(self.counts)
        if not (len(self.lo) == len(self.hi) == len(self.periodic) == nd) or nd == 0:
            raise ValueError("counts, lo, hi and periodic must have the same non-zero length")
        for i in range(nd):
            if int(self.counts[i]) < 3:
                raise ValueError(f"dim {i}: need at least 3 points, got {self.counts[i]}")
            if not self.lo[i] < self.hi[i]:
                raise ValueError(f"dim {i}: lo must be < hi")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))

    @classmethod
    def build(cls, dims: Sequence[tuple]) -> "GridDef":
        """``dims`` is a sequence of ``(count, lo, hi)`` or ``(count, lo, hi, periodic)``."""
        rows = [tuple(d) + (False,) * (4 - len(d)) for d in dims]
        return cls(*(tuple(col) for col in zip(*rows)))

    @property
    def ndim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array([
            (hi - lo) / (c if p else c - 1)
            for c, lo, hi, p in zip(self.counts, self.lo, self.hi, self.periodic)
        ])

    def axis(self, i: int) -> np.ndarray:
        return self.lo[i] + self.spacing[i] * np.arange(self.counts[i])

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``shape + (ndim,)``."""
        mesh = np.meshgrid(*(self.axis(i) for i in range(self.ndim)), indexing="ij")
        return np.stack(mesh, axis=-1)

    def node(self, index: Sequence[int]) -> np.ndarray:
        return np.array([self.lo[i] + self.spacing[i] * index[i] for i in range(self.ndim)])

    def index_of(self, x: Sequence[float]) -> tuple[int, ...]:
        """Nearest node index of a coordinate (inverse of :meth:`node` at nodes)."""
        s = self.fractional_index(np.asarray(x, dtype=float))
        return tuple(int(round(v)) % self.counts[i] for i, v in enumerate(s))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        for i, p in enumerate(self.periodic):
            if p:
                period = self.hi[i] - self.lo[i]
                x[..., i] = self.lo[i] + np.mod(x[..., i] - self.lo[i], period)
        return x

    def fractional_index(self, x: np.ndarray) -> np.ndarray:
        s = (np.asarray(x, dtype=float) - np.array(self.lo)) / self.spacing
        near = np.rint(s)
        return np.where(np.abs(s - near) < _SNAP, near, s)

    def contains(self, x, margin_cells: float = 0.0) -> np.ndarray | bool:
        s = self.fractional_index(x)
        ok = np.ones(s.shape[:-1], dtype=bool)
        for i, p in enumerate(self.periodic):
            if not p:
                ok &= (s[..., i] >= margin_cells) & (s[..., i] <= self.counts[i] - 1 - margin_cells)
        return bool(ok) if ok.ndim == 0 else ok


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values on every grid node, stored C-order (last dimension fastest)."""

    grid: GridDef
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("ScalarField values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def data(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __call__(self, x) -> float | np.ndarray:
        return interpolate(self, x)

    @cached_property
    def _gradient_fields(self) -> dict:
        return {}

    def node_gradient(self, mode: GradientMode | str = GradientMode.CENTRAL) -> np.ndarray:
        """Per-node finite-difference gradient, shape ``shape + (ndim,)``. Cached."""
        mode = GradientMode(mode)
        cache = self._gradient_fields
        if mode not in cache:
            g = node_gradient(self.values, self.grid, mode)
            g.setflags(write=False)
            cache[mode] = g
        return cache[mode]


def sample_function(grid: GridDef, f: Callable[[np.ndarray], float], vectorized: bool = False) -> ScalarField:
    """Evaluate ``f`` on every node. With ``vectorized=True`` ``f`` receives all nodes at once."""
    pts = grid.points()
    if vectorized:
        vals = np.asarray(f(pts), dtype=float).reshape(grid.shape)
    else:
        flat = pts.reshape(-1, grid.ndim)
        vals = np.fromiter((f(p) for p in flat), dtype=float, count=flat.shape[0]).reshape(grid.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite value at node {idx} (x={grid.node(idx).tolist()})")
    return ScalarField(grid, vals)


# ---------------------------------------------------------------------------
# finite differences on node arrays


def _diff(values: np.ndarray, grid: GridDef, axis: int, mode: GradientMode) -> np.ndarray:
    bwd, fwd = one_sided_differences(values, grid, axis)
    if mode is GradientMode.RIGHT:
        return fwd
    if mode is GradientMode.LEFT:
        return bwd
    # at non-periodic edges both one-sided arrays hold the same boundary difference
    return 0.5 * (fwd + bwd)


def node_gradient(values: np.ndarray, grid: GridDef, mode: GradientMode | str = GradientMode.CENTRAL) -> np.ndarray:
    mode = GradientMode(mode)
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    return np.stack([_diff(values, grid, a, mode) for a in range(grid.ndim)], axis=-1)


def one_sided_differences(values: np.ndarray, grid: GridDef, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """First-order ``(backward, forward)`` differences with linear extrapolation at the edges."""
    h = grid.spacing[axis]
    if grid.periodic[axis]:
        return ((values - np.roll(values, 1, axis=axis)) / h,
                (np.roll(values, -1, axis=axis) - values) / h)
    d = np.diff(values, axis=axis) / h
    first = [slice(None)] * values.ndim
    last = [slice(None)] * values.ndim
    first[axis] = slice(0, 1)
    last[axis] = slice(-1, None)
    bwd = np.concatenate([d[tuple(first)], d], axis=axis)
    fwd = np.concatenate([d, d[tuple(last)]], axis=axis)
    return bwd, fwd


# ---------------------------------------------------------------------------
# interpolation


def _cell_weights(grid: GridDef, x: np.ndarray):
    """Lower corner indices, upper indices and fractional weights for each point."""
    x = grid.wrap(x)
    s = grid.fractional_index(x)
    lo_idx = np.empty(s.shape, dtype=np.intp)
    hi_idx = np.empty(s.shape, dtype=np.intp)
    w = np.empty(s.shape)
    for i in range(grid.ndim):
        n = grid.counts[i]
        si = s[..., i]
        if grid.periodic[i]:
            si = np.mod(si, n)
            i0 = np.floor(si).astype(np.intp)
            i0 = np.minimum(i0, n - 1)
            lo_idx[..., i] = i0
            hi_idx[..., i] = (i0 + 1) % n
            w[..., i] = si - i0
        else:
            if np.any(si < 0) or np.any(si > n - 1) or np.any(~np.isfinite(si)):
                raise DomainError(f"coordinate outside grid on dim {i} "
                                  f"[{grid.lo[i]}, {grid.hi[i]}]: {np.asarray(x)[..., i].min()}..{np.asarray(x)[..., i].max()}")
            i0 = np.minimum(np.floor(si).astype(np.intp), n - 2)
            lo_idx[..., i] = i0
            hi_idx[..., i] = i0 + 1
            w[..., i] = si - i0
    return lo_idx, hi_idx, w


def interpolate_many(grid: GridDef, arrays: np.ndarray, x) -> np.ndarray:
    """Multilinear interpolation of ``arrays`` (shape ``grid.shape + tail``) at points ``x``.

    Returns shape ``x.shape[:-1] + tail``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != grid.ndim:
        raise ValueError(f"point dimension {x.shape[-1]} != grid dimension {grid.ndim}")
    lo_idx, hi_idx, w = _cell_weights(grid, x)
    tail = arrays.shape[grid.ndim:]
    out = np.zeros(x.shape[:-1] + tail)
    for corner in itertools.product((0, 1), repeat=grid.ndim):
        weight = np.ones(x.shape[:-1])
        idx = []
        for i, c in enumerate(corner):
            if c:
                weight = weight * w[..., i]
                idx.append(hi_idx[..., i])
            else:
                weight = weight * (1.0 - w[..., i])
                idx.append(lo_idx[..., i])
        vals = arrays[tuple(idx)]
        out = out + weight.reshape(weight.shape + (1,) * len(tail)) * vals
    return out


def interpolate(field: ScalarField, x) -> float | np.ndarray:
    out = interpolate_many(field.grid, field.values, x)
    return float(out) if out.ndim == 0 else out


class GradientQuery(NamedTuple):
    grad: np.ndarray
    one_sided: bool | np.ndarray


def gradient(field: ScalarField, x, mode: GradientMode | str = GradientMode.CENTRAL) -> GradientQuery:
    """Interpolated finite-difference gradient.

    In central mode, queries within one cell of a non-periodic edge use the
    one-sided stencils stored at the boundary nodes and are flagged.
    """
    mode = GradientMode(mode)
    x = np.asarray(x, dtype=float)
    g = interpolate_many(field.grid, field.node_gradient(mode), x)
    if mode is GradientMode.CENTRAL:
        flag = ~np.asarray(field.grid.contains(x, margin_cells=1.0))
    else:
        flag = np.ones(x.shape[:-1], dtype=bool)
    return GradientQuery(g, bool(flag) if flag.ndim == 0 else flag)
