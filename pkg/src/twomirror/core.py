"""Domain types and geometric primitives shared by the solver, evaluators and checks.

Points live on the common hyperplane of the two apertures and are stored as
rows of ``(m, n)`` float arrays.  Every container here is immutable: arrays are
copied on construction and flagged read-only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np


class TwoMirrorError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(TwoMirrorError, ValueError):
    pass


class UnsolvableProblemError(TwoMirrorError):
    pass


class BalanceViolationError(TwoMirrorError):
    pass


class ProblemTooLargeError(TwoMirrorError):
    pass


class InternalSolverError(TwoMirrorError):
    pass


class Kind(str, enum.Enum):
    """Reflector pair type: envelope of paraboloids from below (A) or above (B)."""

    A = "A"
    B = "B"


class Direction(str, enum.Enum):
    MIN_COST = "min"
    MAX_COST = "max"

    @property
    def kind(self) -> Kind:
        return Kind.A if self is Direction.MIN_COST else Kind.B

    @classmethod
    def from_kind(cls, kind: Kind | str) -> "Direction":
        return cls.MIN_COST if Kind(kind) is Kind.A else cls.MAX_COST


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def as_points(points) -> np.ndarray:
    """Coerce ``points`` to a finite ``(m, n)`` float array (1D input is one coordinate per point)."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise InvalidArgumentError(f"points must be an (m, n) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("point coordinates must be finite")
    return arr


def as_point(x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1:
        raise InvalidArgumentError(f"a point must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("point coordinates must be finite")
    return arr


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud: intensity times cell measure at each point."""

    points: np.ndarray
    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        pts = as_points(self.points)
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(w) != len(pts):
            raise InvalidArgumentError(
                f"{len(pts)} points but {len(w)} weights")
        if not np.all(np.isfinite(w)):
            raise InvalidArgumentError("weights must be finite")
        if np.any(w < 0):
            raise InvalidArgumentError("weights must be nonnegative")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "total_mass", float(w.sum()))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    def support(self) -> "DiscreteMeasure":
        """Drop zero-weight points."""
        keep = self.weights > 0
        if keep.all():
            return self
        return DiscreteMeasure(self.points[keep], self.weights[keep])

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, self.weights * factor)


@dataclass(frozen=True)
class ProblemSpec:
    """Source (input beam) and target (output beam) measures with the reduced optical path length."""

    source: DiscreteMeasure
    target: DiscreteMeasure
    beta: float
    mass_tolerance: float = 1e-2
    rescale_factor: float = 1.0

    def __post_init__(self):
        beta = float(self.beta)
        if not np.isfinite(beta) or beta <= 0:
            raise InvalidArgumentError(f"beta must be positive, got {self.beta}")
        if self.source.dim != self.target.dim:
            raise InvalidArgumentError(
                f"source dimension {self.source.dim} != target dimension {self.target.dim}")
        if not self.mass_tolerance >= 0:
            raise InvalidArgumentError("mass_tolerance must be nonnegative")
        object.__setattr__(self, "beta", beta)

    @property
    def dim(self) -> int:
        return self.source.dim

    @property
    def mass(self) -> float:
        return self.source.total_mass


@dataclass(frozen=True)
class ReflectorPair:
    """Heights of the two mirrors sampled at the source and target support points.

    ``zeta[i]`` is the first-mirror height above ``source_points[i]`` and
    ``omega[j]`` the second-mirror height above ``target_points[j]``.
    """

    source_points: np.ndarray
    target_points: np.ndarray
    zeta: np.ndarray
    omega: np.ndarray
    beta: float
    kind: Kind = Kind.A
    gauge: str = "none"

    def __post_init__(self):
        xs = as_points(self.source_points)
        ps = as_points(self.target_points)
        zeta = np.asarray(self.zeta, dtype=np.float64).ravel()
        omega = np.asarray(self.omega, dtype=np.float64).ravel()
        if xs.shape[1] != ps.shape[1]:
            raise InvalidArgumentError("source and target points differ in dimension")
        if len(zeta) != len(xs) or len(omega) != len(ps):
            raise InvalidArgumentError("height arrays must match the support sizes")
        if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(omega))):
            raise InvalidArgumentError("heights must be finite")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise InvalidArgumentError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "source_points", _frozen(xs))
        object.__setattr__(self, "target_points", _frozen(ps))
        object.__setattr__(self, "zeta", _frozen(zeta))
        object.__setattr__(self, "omega", _frozen(omega))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "kind", Kind(self.kind))

    def with_heights(self, zeta, omega, **changes) -> "ReflectorPair":
        return replace(self, zeta=zeta, omega=omega, **changes)

    def shifted(self, c: float, gauge: str | None = None) -> "ReflectorPair":
        """Translate both mirrors vertically by ``c``; the ray map is unchanged."""
        return replace(self, zeta=self.zeta + c, omega=self.omega + c,
                       gauge=self.gauge if gauge is None else gauge)

    def gap_matrix(self) -> np.ndarray:
        """``zeta_i - omega_j - (beta^2 - |x_i - p_j|^2) / (2 beta)`` for all pairs."""
        d2 = squared_distances(self.source_points, self.target_points)
        return self.zeta[:, None] - self.omega[None, :] - (self.beta**2 - d2) / (2 * self.beta)

    def admissibility_violation(self) -> float:
        """Largest violation of the admissibility inequality (0 when admissible)."""
        g = self.gap_matrix()
        if self.kind is Kind.B:
            g = -g
        return float(max(0.0, -g.min()))

    def is_admissible(self, slack: float = 1e-9) -> bool:
        return self.admissibility_violation() <= slack

    def is_tight(self, tol: float = 1e-9) -> bool:
        """Every row and every column of the constraint set attains equality."""
        g = np.abs(self.gap_matrix())
        return bool(np.all(g.min(axis=1) <= tol) and np.all(g.min(axis=0) <= tol))

    def lipschitz_constant(self) -> float:
        """Bound ``sup |x - p| / beta`` satisfied by tight pairs."""
        return float(np.sqrt(squared_distances(self.source_points, self.target_points).max())
                     / self.beta)


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling ``gamma[rows[k], cols[k]] = mass[k]``."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    n_source: int
    n_target: int
    cost: float

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        mass = np.asarray(self.mass, dtype=np.float64).ravel()
        if not (len(rows) == len(cols) == len(mass)):
            raise InvalidArgumentError("plan entry arrays differ in length")
        if np.any(mass < 0):
            raise InvalidArgumentError("plan masses must be nonnegative")
        if len(rows) and (rows.min() < 0 or rows.max() >= self.n_source
                          or cols.min() < 0 or cols.max() >= self.n_target):
            raise InvalidArgumentError("plan index out of range")
        object.__setattr__(self, "rows", _frozen(rows, np.int64))
        object.__setattr__(self, "cols", _frozen(cols, np.int64))
        object.__setattr__(self, "mass", _frozen(mass))

    @classmethod
    def from_dense(cls, gamma: np.ndarray, source_points, target_points) -> "TransportPlan":
        gamma = np.asarray(gamma, dtype=np.float64)
        rows, cols = np.nonzero(gamma > 0)
        mass = gamma[rows, cols]
        cost = plan_cost(rows, cols, mass, source_points, target_points)
        return cls(rows, cols, mass, gamma.shape[0], gamma.shape[1], cost)

    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.mass.tolist()))

    def dense(self) -> np.ndarray:
        g = np.zeros((self.n_source, self.n_target))
        np.add.at(g, (self.rows, self.cols), self.mass)
        return g

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.mass, minlength=self.n_source)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.mass, minlength=self.n_target)

    def marginal_error(self, a, b) -> float:
        """Largest relative deviation of row/column sums from ``a`` and ``b``."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        scale = max(a.sum(), 1e-300)
        return float(max(np.abs(self.row_sums() - a).max(),
                         np.abs(self.col_sums() - b).max()) / scale)


# ---------------------------------------------------------------------------
# geometric primitives
# ---------------------------------------------------------------------------

def _check_scalar(name, v):
    v = float(v)
    if not np.isfinite(v):
        raise InvalidArgumentError(f"{name} must be finite")
    return v


def _check_pair(x, p):
    x = as_point(x)
    p = as_point(p)
    if x.shape != p.shape:
        raise InvalidArgumentError(f"dimension mismatch: {x.shape} vs {p.shape}")
    return x, p


def paraboloid_k(x, p, w: float, beta: float) -> float:
    """Paraboloid focused at ``(p, w)`` with focal parameter ``beta``, evaluated at ``x``."""
    x, p = _check_pair(x, p)
    w = _check_scalar("w", w)
    beta = _check_scalar("beta", beta)
    if beta <= 0:
        raise InvalidArgumentError("beta must be positive")
    r2 = float(np.dot(x - p, x - p))
    return (beta * beta - r2) / (2.0 * beta) + w


def paraboloid_h(p, x, z: float, beta: float) -> float:
    """Paraboloid focused at ``(x, z)`` with focal parameter ``beta``, evaluated at ``p``."""
    x, p = _check_pair(x, p)
    z = _check_scalar("z", z)
    beta = _check_scalar("beta", beta)
    if beta <= 0:
        raise InvalidArgumentError("beta must be positive")
    r2 = float(np.dot(x - p, x - p))
    return (r2 - beta * beta) / (2.0 * beta) + z


def quadratic_cost(x, p) -> float:
    x, p = _check_pair(x, p)
    d = x - p
    return 0.5 * float(np.dot(d, d))


def squared_distances(xs: np.ndarray, ps: np.ndarray) -> np.ndarray:
    """Dense ``|x_i - p_j|^2``, computed coordinate-wise so the result is exact for
    coincident points (no ``|x|^2 + |p|^2 - 2 x.p`` cancellation)."""
    xs = np.asarray(xs, dtype=np.float64)
    ps = np.asarray(ps, dtype=np.float64)
    out = np.zeros((xs.shape[0], ps.shape[0]))
    for k in range(xs.shape[1]):
        diff = xs[:, k, None] - ps[None, :, k]
        out += diff * diff
    return out


def cost_matrix(xs, ps) -> np.ndarray:
    return 0.5 * squared_distances(xs, ps)


def plan_cost(rows, cols, mass, source_points, target_points) -> float:
    xs = np.asarray(source_points, dtype=np.float64)
    ps = np.asarray(target_points, dtype=np.float64)
    d = xs[np.asarray(rows)] - ps[np.asarray(cols)]
    return float(np.dot(mass, 0.5 * np.einsum("ij,ij->i", d, d)))


def validate_problem(spec: ProblemSpec, force: bool = False) -> ProblemSpec:
    """Drop zero-weight points and rescale the target so both masses agree.

    Returns a new spec whose ``rescale_factor`` records the factor applied to
    the target weights (cumulative over repeated calls, which leave it at 1).

    Raises
    ------
    UnsolvableProblemError
        Either measure has no positive weight.
    BalanceViolationError
        The relative mass mismatch exceeds ``spec.mass_tolerance`` and
        ``force`` is false.
    """
    src = spec.source.support()
    tgt = spec.target.support()
    if len(src) == 0:
        raise UnsolvableProblemError("source intensity has empty support")
    if len(tgt) == 0:
        raise UnsolvableProblemError("target intensity has empty support")
    ms, mt = src.total_mass, tgt.total_mass
    mismatch = abs(ms - mt) / ms
    if mismatch > spec.mass_tolerance and not force:
        raise BalanceViolationError(
            f"source mass {ms:.6g} and target mass {mt:.6g} differ by {mismatch:.3%}, "
            f"more than the tolerance {spec.mass_tolerance:.3%}")
    factor = ms / mt
    if factor != 1.0:
        tgt = tgt.scaled(factor)
        # one correction step so the sums agree to the last bit where possible
        resid = ms - tgt.total_mass
        if resid != 0.0:
            j = int(np.argmax(tgt.weights))
            w = np.array(tgt.weights)
            w[j] += resid
            tgt = DiscreteMeasure(tgt.points, w)
    return replace(spec, source=src, target=tgt,
                   rescale_factor=spec.rescale_factor * factor)
