"""Continuous mirror surfaces from sampled pairs, and the ray-tracing map.

The first mirror is the upper (type A) or lower (type B) envelope of the
paraboloids ``k_{p_j, omega_j}``; the second is the matching envelope of
``h_{x_i, zeta_i}``.  Both are evaluated exhaustively over the opposite support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError, Kind, ReflectorPair, as_point, as_points, squared_distances
from .ot import _envelope_first, _envelope_second

TIE_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Regular grid of nodes ``origin + index * spacing`` along each axis."""

    origin: tuple
    spacing: tuple
    shape: tuple

    def __post_init__(self):
        o = tuple(float(v) for v in np.atleast_1d(self.origin))
        h = tuple(float(v) for v in np.atleast_1d(self.spacing))
        s = tuple(int(v) for v in np.atleast_1d(self.shape))
        if not (len(o) == len(h) == len(s)):
            raise InvalidArgumentError("grid origin, spacing and shape differ in length")
        if any(n < 1 for n in s):
            raise InvalidArgumentError(f"grid shape must be positive, got {s}")
        if any(not (v > 0 and np.isfinite(v)) for v in h):
            raise InvalidArgumentError(f"grid spacing must be positive, got {h}")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "spacing", h)
        object.__setattr__(self, "shape", s)

    @property
    def dim(self) -> int:
        return len(self.shape)

    def axes(self):
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.shape)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, row-major over ``shape``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @classmethod
    def covering(cls, points, shape=None) -> "GridSpec":
        """Grid spanning the bounding box of ``points`` (a single node if degenerate)."""
        pts = as_points(points)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        if shape is None:
            shape = [min(len(np.unique(pts[:, k])), 129) for k in range(pts.shape[1])]
        shape = np.broadcast_to(np.asarray(shape, dtype=int), lo.shape)
        spacing = [(h - l) / (n - 1) if n > 1 and h > l else 1.0
                   for l, h, n in zip(lo, hi, shape)]
        shape = [n if h > l else 1 for l, h, n in zip(lo, hi, shape)]
        return cls(tuple(lo), tuple(spacing), tuple(shape))


@dataclass(frozen=True)
class RayTraceResult:
    source_point: np.ndarray
    target_point: np.ndarray
    target_index: int
    z_height: float
    w_height: float
    segment_length: float
    opl_reduced: float
    tie_set: tuple = ()


def _query(x, dim) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 0 or (arr.ndim == 1 and (dim > 1 or arr.shape[0] == 1))
    if single:
        pt = as_point(arr)
        if pt.shape[0] != dim:
            raise InvalidArgumentError(f"expected a {dim}-dimensional point")
        return pt[None, :], True
    pts = as_points(arr)
    if pts.shape[1] != dim:
        raise InvalidArgumentError(f"expected {dim}-dimensional points")
    return pts, False


def eval_first(x, pair: ReflectorPair):
    """First-mirror height above ``x`` (a point or an ``(m, n)`` array of points)."""
    pts, single = _query(x, pair.source_points.shape[1])
    z = _envelope_first(pts, pair.target_points, pair.omega, pair.beta, pair.kind)
    return float(z[0]) if single else z


def eval_second(p, pair: ReflectorPair):
    """Second-mirror height above ``p``."""
    pts, single = _query(p, pair.target_points.shape[1])
    w = _envelope_second(pts, pair.source_points, pair.zeta, pair.beta, pair.kind)
    return float(w[0]) if single else w


def potential_V(x, pair: ReflectorPair):
    """``|x|^2/2 + beta z(x) - beta^2/2``: convex for type A, concave for type B."""
    pts, single = _query(x, pair.source_points.shape[1])
    z = _envelope_first(pts, pair.target_points, pair.omega, pair.beta, pair.kind)
    v = 0.5 * np.einsum("ij,ij->i", pts, pts) + pair.beta * z - 0.5 * pair.beta**2
    return float(v[0]) if single else v


def _lex_order(points: np.ndarray) -> np.ndarray:
    """Rank of each point in lexicographic coordinate order (index breaks exact duplicates)."""
    keys = [np.arange(len(points))] + [points[:, k] for k in range(points.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys)
    rank = np.empty(len(points), dtype=np.int64)
    rank[order] = np.arange(len(points))
    return rank


def _scores(pts, pair: ReflectorPair) -> np.ndarray:
    """``k_{p_j, omega_j}(x)`` for every query point (rows) and target (columns),
    sign-flipped for type B so that the selected target always maximizes."""
    d2 = squared_distances(pts, pair.target_points)
    k = (pair.beta**2 - d2) / (2 * pair.beta) + pair.omega[None, :]
    return k if pair.kind is Kind.A else -k


def tie_mask(pts, pair: ReflectorPair, tol: float = TIE_TOL) -> np.ndarray:
    """Boolean ``(m, nt)`` mask of the supporting paraboloids at each query point."""
    s = _scores(pts, pair)
    return s >= s.max(axis=1, keepdims=True) - tol


def trace_map(pair: ReflectorPair, x=None, tol: float = TIE_TOL) -> np.ndarray:
    """Single-valued ray map as target indices.

    ``x`` defaults to the source support.  Among supporting paraboloids the
    lexicographically smallest target point is chosen.
    """
    pts = pair.source_points if x is None else _query(x, pair.source_points.shape[1])[0]
    mask = tie_mask(pts, pair, tol)
    rank = _lex_order(pair.target_points)
    ranked = np.where(mask, rank[None, :], np.iinfo(np.int64).max)
    return np.argmin(ranked, axis=1)


def ray_trace(x, pair: ReflectorPair, diagnostics: bool = False,
              tol: float = TIE_TOL) -> RayTraceResult:
    """Trace the ray entering at ``x`` through both mirrors."""
    pts, _ = _query(x, pair.source_points.shape[1])
    j = int(trace_map(pair, pts, tol)[0])
    p = pair.target_points[j]
    z = float(_envelope_first(pts, pair.target_points, pair.omega, pair.beta, pair.kind)[0])
    w = float(pair.omega[j])
    r2 = float(np.sum((pts[0] - p) ** 2))
    t = float(np.sqrt(r2 + (z - w) ** 2))
    ties = tuple(np.flatnonzero(tie_mask(pts, pair, tol)[0]).tolist()) if diagnostics else ()
    return RayTraceResult(pts[0].copy(), p.copy(), j, z, w, t, z - w + t, ties)


@dataclass(frozen=True)
class SupportTrace:
    """Ray map and path data at every source support point, using stored heights."""

    target_index: np.ndarray
    z: np.ndarray
    w: np.ndarray
    segment_length: np.ndarray
    opl_reduced: np.ndarray


def trace_support(pair: ReflectorPair, tol: float = TIE_TOL) -> SupportTrace:
    j = trace_map(pair, None, tol)
    z = np.asarray(pair.zeta)
    w = pair.omega[j]
    d = pair.source_points - pair.target_points[j]
    r2 = np.einsum("ij,ij->i", d, d)
    t = np.sqrt(r2 + (z - w) ** 2)
    return SupportTrace(j, z, w, t, z - w + t)


def inverse_ray_trace(p, pair: ReflectorPair, tol: float = TIE_TOL) -> np.ndarray:
    """Indices of source support points whose (possibly multivalued) ray map contains ``p``.

    ``p`` may be a target index or a point coinciding with a target support point.
    """
    if np.isscalar(p) and isinstance(p, (int, np.integer)):
        j = int(p)
    else:
        q = as_point(p)
        hits = np.flatnonzero(np.all(pair.target_points == q[None, :], axis=1))
        if len(hits) == 0:
            raise InvalidArgumentError("point is not a target support point")
        j = int(hits[0])
    mask = tie_mask(pair.source_points, pair, tol)
    return np.flatnonzero(mask[:, j])


def first_gradient(pair: ReflectorPair, tol: float = TIE_TOL) -> np.ndarray:
    """``(pbar_i - x_i) / beta`` with ``pbar_i`` the centroid of the supporting targets."""
    mask = tie_mask(pair.source_points, pair, tol).astype(np.float64)
    pbar = mask @ pair.target_points / mask.sum(axis=1, keepdims=True)
    return (pbar - pair.source_points) / pair.beta


def second_gradient(pair: ReflectorPair, tol: float = TIE_TOL) -> np.ndarray:
    """``(p_j - xbar_j) / beta`` with ``xbar_j`` the centroid of the preimage of ``p_j``."""
    mask = tie_mask(pair.source_points, pair, tol).astype(np.float64)
    cnt = mask.sum(axis=0)
    if np.any(cnt == 0):
        raise InvalidArgumentError("pair is not tight: some target has an empty preimage")
    xbar = mask.T @ pair.source_points / cnt[:, None]
    return (pair.target_points - xbar) / pair.beta


def first_height_from_second(pair: ReflectorPair, tol: float = TIE_TOL) -> np.ndarray:
    """First-mirror height over the preimage of each target, rebuilt from the second mirror:
    ``w - (beta/2) |grad w|^2 + beta/2``."""
    gw = second_gradient(pair, tol)
    return pair.omega - 0.5 * pair.beta * np.einsum("ij,ij->i", gw, gw) + 0.5 * pair.beta


def apply_scaling_symmetry(pair: ReflectorPair, lam: float) -> ReflectorPair:
    """Stretch the first mirror by ``lam`` and compensate ``beta`` and the second mirror.

    The ray map is unchanged.
    """
    lam = float(lam)
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidArgumentError(f"scale factor must be positive, got {lam}")
    if lam == 1.0:
        return pair
    beta = pair.beta
    return ReflectorPair(pair.source_points, pair.target_points,
                         lam * pair.zeta,
                         lam * pair.omega + 0.5 * beta * (lam - 1.0 / lam),
                         beta / lam, pair.kind, gauge=pair.gauge)


def export_sampling(pair: ReflectorPair, first_grid: GridSpec | None = None,
                    second_grid: GridSpec | None = None):
    """Dense samples of both mirrors.

    Returns ``((first_grid, z_values), (second_grid, w_values))`` with values
    shaped like the grids.
    """
    first_grid = first_grid or GridSpec.covering(pair.source_points)
    second_grid = second_grid or GridSpec.covering(pair.target_points)
    for g in (first_grid, second_grid):
        if g.dim != pair.source_points.shape[1]:
            raise InvalidArgumentError("grid dimension does not match the pair")
    z = eval_first(first_grid.nodes(), pair).reshape(first_grid.shape)
    w = eval_second(second_grid.nodes(), pair).reshape(second_grid.shape)
    return (first_grid, z), (second_grid, w)
