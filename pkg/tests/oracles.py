"""Independent reference computations used by the tests.

None of these call into the solver, the filters or the QP; they brute-force
the quantity of interest from its definition.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_dilation

G = 9.81


def vrocket_reach_set(points: np.ndarray, horizon: float, dt: float, thrust: float = 250.0,
                      n_controls: int = 51, pad: tuple[float, float] = (0.0, 20.0)) -> np.ndarray:
    """Discrete-time reachable set of the vertical rocket under constant thrust.

    A node is marked if some thrust from an ``n_controls`` lattice puts the
    altitude inside ``pad`` at one of the sample times ``k * dt``, ``k = 0..n``.
    Constant thrust covers the optimal control here: the altitude at time t
    under any admissible thrust history lies between the two extremal
    constant-thrust parabolas, and every value in between is hit by some
    constant thrust.
    """
    n = int(np.ceil(horizon / dt - 1e-12))
    dt = horizon / n
    acc = np.linspace(-thrust, thrust, n_controls) - G
    z = points[..., 0][..., None]
    v = points[..., 1][..., None]
    lo, hi = pad
    hit = (points[..., 0] >= lo) & (points[..., 0] <= hi)
    for k in range(1, n + 1):
        t = k * dt
        zt = z + v * t + 0.5 * acc * t * t
        hit |= np.any((zt >= lo) & (zt <= hi), axis=-1)
    return hit


def boundary_band(mask: np.ndarray) -> np.ndarray:
    """Nodes within one cell (8-neighbourhood) of a change in ``mask``."""
    st = np.ones((3,) * mask.ndim, dtype=bool)
    return binary_dilation(mask, st) & binary_dilation(~mask, st)


def _lattice(lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


def _segment(alpha, beta, bounds):
    """Parametrise ``{u in box : alpha + beta . u = 0}`` for ``len(u) <= 2``.

    Returns ``(point(s), lo, hi)`` where ``point(s)`` maps a scalar parameter to
    a control, or ``None`` when the set is empty. For two controls the
    parameter is the coordinate with the smaller ``|beta|``.
    """
    lo_b, hi_b = bounds[:, 0], bounds[:, 1]
    slack = 1e-12 * (1.0 + np.abs(bounds).max())  # rounding in -alpha / beta
    if beta.size == 1 or np.count_nonzero(beta) == 0:
        if beta.size == 1 and beta[0] != 0.0:
            u = -alpha / beta[0]
            if not lo_b[0] - slack <= u <= hi_b[0] + slack:
                return None
            u = min(max(u, lo_b[0]), hi_b[0])
            return lambda s: np.full(np.shape(s) + (1,), u), 0.0, 0.0
        if abs(alpha) > 1e-12:
            return None
        return "all"
    j = int(np.argmax(np.abs(beta)))
    i = 1 - j

    def point(s):
        s = np.asarray(s, dtype=float)
        u = np.empty(s.shape + (2,))
        u[..., i] = s
        u[..., j] = (-alpha - beta[i] * s) / beta[j]
        return u

    # interval of the free coordinate that keeps u_j inside its bounds
    lo, hi = lo_b[i], hi_b[i]
    if beta[i] != 0.0:
        a = (-alpha - beta[j] * lo_b[j]) / beta[i]
        b = (-alpha - beta[j] * hi_b[j]) / beta[i]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    else:
        uj = -alpha / beta[j]
        if not lo_b[j] - slack <= uj <= hi_b[j] + slack:
            return None
    if lo > hi + slack:
        return None
    hi = max(lo, hi)
    return point, lo, hi


def lattice_qp(u_nom, alpha, beta, equality: bool, bounds, n: int = 201, rounds: int = 6):
    """Brute-force minimum of ``||u - u_nom||^2`` over a box and one linear constraint.

    For the inequality sense the box projection of ``u_nom`` is optimal when
    it satisfies the constraint; otherwise the constraint is active at the
    optimum, which reduces both senses to a search along the segment
    ``box & {alpha + beta . u = 0}``. That segment is scanned with an
    ``n``-point lattice, then rescanned around the best point. The cost
    along the segment is a convex quadratic, so the minimiser stays within
    one lattice step of the best scanned point. Returns ``(u, cost)`` or
    ``None`` when infeasible.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    beta = np.asarray(beta, dtype=float)
    u_nom = np.asarray(u_nom, dtype=float)
    u_box = np.clip(u_nom, bounds[:, 0], bounds[:, 1])
    box_cost = float(np.sum((u_box - u_nom) ** 2))
    if not equality and alpha + beta @ u_box <= 0.0:
        return u_box, box_cost
    seg = _segment(alpha, beta, bounds)
    if seg is None:
        return None
    if isinstance(seg, str):
        return u_box, box_cost
    point, lo, hi = seg
    best = None
    for _ in range(rounds):
        s = np.linspace(lo, hi, n)
        u = point(s)
        cost = np.sum((u - u_nom) ** 2, axis=-1)
        k = int(np.argmin(cost))
        best = (u[k], float(cost[k]))
        h = (hi - lo) / (n - 1)
        lo, hi = max(lo, s[k] - h), min(hi, s[k] + h)
        if hi <= lo:
            break
    return best


def lattice_linear_argmin(c, bounds, n: int = 101) -> np.ndarray:
    """Lattice minimiser of ``c . u`` over a box (first hit in lattice order)."""
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    pts = _lattice(bounds[:, 0], bounds[:, 1], n)
    return pts[int(np.argmin(pts @ np.asarray(c, dtype=float)))]


def ball_lattice(radius: float, dim: int, n: int = 101, n_radii: int = 11) -> np.ndarray:
    """Polar lattice of a 2-ball (boundary included), or a box lattice clipped to the ball otherwise."""
    if dim == 2:
        ang = np.linspace(-np.pi, np.pi, n, endpoint=False)
        rad = np.linspace(0.0, radius, n_radii)
        a, r = np.meshgrid(ang, rad, indexing="ij")
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1).reshape(-1, 2)
    pts = _lattice([-radius] * dim, [radius] * dim, n)
    return pts[np.linalg.norm(pts, axis=1) <= radius]


def lattice_minimax(p, f1, f2, f3, u_pts, d_pts, minimize_u: bool) -> float:
    """``min_u max_d`` (or ``max_u min_d``) of ``p . (f1 + f2 u + f3 d)`` over explicit lattices.

    Evaluated on the full product lattice, not per player.
    """
    base = float(p @ f1)
    cu = u_pts @ (p @ f2) if u_pts.size else np.zeros(1)
    cd = d_pts @ (p @ f3) if d_pts.size else np.zeros(1)
    table = base + cu[:, None] + cd[None, :]
    if minimize_u:
        return float(np.min(np.max(table, axis=1)))
    return float(np.max(np.min(table, axis=1)))
