"""Discrete transport solves and the dual-potential <-> reflector-height dictionary.

Type A pairs come from the min-cost problem, type B pairs from the max-cost
problem (solved by negating the cost).  With ``c_ij = |x_i - p_j|^2 / 2`` the
affine map

    zeta = beta/2 - phi/beta,   omega = psi/beta

turns dual feasibility ``phi_i + psi_j <= c_ij`` into mirror admissibility
``zeta_i - omega_j >= (beta^2 - |x_i - p_j|^2) / (2 beta)``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _simplex
from .core import (
    Direction,
    InternalSolverError,
    InvalidArgumentError,
    Kind,
    ProblemSpec,
    ProblemTooLargeError,
    ReflectorPair,
    TransportPlan,
    cost_matrix,
    plan_cost,
    squared_distances,
)

log = logging.getLogger(__name__)

GAUGES = ("balanced", "min_zeta", "none")


class Method(str, enum.Enum):
    EXACT = "exact"
    ENTROPIC = "entropic"


@dataclass(frozen=True)
class DualPotentials:
    phi: np.ndarray
    psi: np.ndarray

    def violation(self, C: np.ndarray, direction: Direction = Direction.MIN_COST) -> float:
        """Largest breach of ``phi + psi <= c`` (reversed for max-cost)."""
        s = self.phi[:, None] + self.psi[None, :] - C
        if direction is Direction.MAX_COST:
            s = -s
        return float(max(0.0, s.max()))

    def value(self, a, b) -> float:
        return float(np.dot(self.phi, a) + np.dot(self.psi, b))


@dataclass(frozen=True)
class SolveResult:
    plan: TransportPlan
    duals: DualPotentials
    objective: float
    iterations: int
    method: Method
    duality_gap: float
    direction: Direction
    converged: bool = True


def _balance_duals(phi, psi, a, b):
    """Shift ``(phi + s, psi - s)`` so that ``<phi, a> == <psi, b>``."""
    s = (np.dot(psi, b) - np.dot(phi, a)) / (a.sum() + b.sum())
    return phi + s, psi - s


def _check_size(spec: ProblemSpec, max_points: int):
    ns, nt = len(spec.source), len(spec.target)
    if ns > max_points or nt > max_points:
        raise ProblemTooLargeError(
            f"{ns} x {nt} support points exceed the exact-solver cap of {max_points}; "
            "use the entropic method for instances this large")


def solve_exact(spec: ProblemSpec, direction: Direction = Direction.MIN_COST, *,
                pivot: str = "block", center: bool = True, max_points: int = 5000,
                cost: np.ndarray | None = None) -> SolveResult:
    """Optimal basic plan and duals of the discrete transport LP.

    Parameters
    ----------
    spec : ProblemSpec
        Validated problem (balanced masses, no zero weights).
    direction : Direction
        ``MIN_COST`` for type A mirrors, ``MAX_COST`` for type B.
    pivot : {"block", "dantzig", "first"}
        Entering-arc rule of the network simplex.  Ties go to the lowest
        ``(i, j)``.
    center : bool
        Replace the vertex duals by an interior point of the optimal dual face
        (see :func:`twomirror._simplex.center_duals`).  This keeps the induced
        ray map free of ties that are not forced by the plan.
    cost : ndarray, optional
        Precomputed ``|x_i - p_j|^2 / 2``; lets callers share it between the
        two directions.
    """
    direction = Direction(direction)
    if pivot not in _simplex.PIVOT_RULES:
        raise InvalidArgumentError(f"unknown pivot rule {pivot!r}")
    _check_size(spec, max_points)
    a = np.asarray(spec.source.weights)
    b = np.asarray(spec.target.weights)
    C = cost_matrix(spec.source.points, spec.target.points) if cost is None else cost
    sign = 1.0 if direction is Direction.MIN_COST else -1.0
    Cs = C if sign > 0 else -C
    (rows, cols, mass), phi, psi, iters, status = _simplex.transport_lp(Cs, a, b, pivot=pivot)
    if status != 0:
        raise InternalSolverError(f"network simplex stopped with status {status}")
    if center:
        phi, psi = _simplex.center_duals(Cs, phi, psi, rows, cols)
    phi, psi = _balance_duals(phi, psi, a, b)
    if sign < 0:
        phi, psi = -phi, -psi
    duals = DualPotentials(phi, psi)
    tc = plan_cost(rows, cols, mass, spec.source.points, spec.target.points)
    plan = TransportPlan(rows, cols, mass, len(a), len(b), tc)
    if plan.marginal_error(a, b) > 1e-10:
        raise InternalSolverError("plan marginals do not match the measures")
    viol = duals.violation(C, direction)
    if viol > 1e-9 * max(1.0, float(np.abs(C).max())):
        raise InternalSolverError(f"dual potentials infeasible by {viol:.3e}")
    objective = float(np.dot(mass, C[rows, cols]))
    gap = abs(objective - duals.value(a, b))
    return SolveResult(plan, duals, objective, iters, Method.EXACT, gap, direction)


def support_diameter(spec: ProblemSpec) -> float:
    pts = np.vstack([spec.source.points, spec.target.points])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def round_to_marginals(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a nonnegative matrix onto the couplings of ``a`` and ``b``.

    Rows are scaled down to at most ``a``, columns to at most ``b``, and the
    leftover mass is distributed as a rank-one correction.
    """
    P = np.array(P, dtype=np.float64)
    r = P.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(r > 0, np.minimum(a / r, 1.0), 1.0)
    P *= x[:, None]
    c = P.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(c > 0, np.minimum(b / c, 1.0), 1.0)
    P *= y[None, :]
    err_r = a - P.sum(axis=1)
    err_c = b - P.sum(axis=0)
    tot = err_r.sum()
    if tot > 0:
        P += np.outer(err_r, err_c) / tot
    return P


def solve_entropic(spec: ProblemSpec, direction: Direction = Direction.MIN_COST,
                   epsilon: float = 1e-3, max_iters: int = 20_000, tol: float = 1e-10,
                   cost: np.ndarray | None = None) -> SolveResult:
    """Log-domain Sinkhorn with ``eps = epsilon * diam^2``, rounded to exact marginals.

    The returned duals are the Sinkhorn potentials after one c-transform sweep,
    which makes them exactly feasible.  Non-convergence sets
    ``converged=False`` instead of raising.
    """
    direction = Direction(direction)
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    a = np.asarray(spec.source.weights)
    b = np.asarray(spec.target.weights)
    M = a.sum()
    C = cost_matrix(spec.source.points, spec.target.points) if cost is None else cost
    Cs = C if direction is Direction.MIN_COST else -C
    eps = epsilon * support_diameter(spec) ** 2
    if eps <= 0:
        eps = epsilon
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        f = eps * (la - logsumexp((g[None, :] - Cs) / eps, axis=1))
        g = eps * (lb - logsumexp((f[:, None] - Cs) / eps, axis=0))
        if it % 10 == 0 or it == max_iters:
            rows = np.exp(logsumexp((f[:, None] + g[None, :] - Cs) / eps, axis=1))
            if np.abs(rows - a).sum() / M < tol:
                converged = True
                break
    if not converged:
        log.warning("Sinkhorn did not reach tol=%g in %d iterations", tol, max_iters)
    P = np.exp((f[:, None] + g[None, :] - Cs) / eps)
    P = round_to_marginals(P, a, b)
    plan = TransportPlan.from_dense(P, spec.source.points, spec.target.points)
    # feasibility repair for the (possibly negated) cost
    psi = np.min(Cs - f[:, None], axis=0)
    phi = np.min(Cs - psi[None, :], axis=1)
    phi, psi = _balance_duals(phi, psi, a, b)
    if direction is Direction.MAX_COST:
        phi, psi = -phi, -psi
    duals = DualPotentials(phi, psi)
    objective = float(np.dot(plan.mass, C[plan.rows, plan.cols]))
    gap = abs(objective - duals.value(a, b))
    return SolveResult(plan, duals, objective, it, Method.ENTROPIC, gap, direction, converged)


# ---------------------------------------------------------------------------
# duals <-> reflectors
# ---------------------------------------------------------------------------

def _envelope_first(xs, ps, omega, beta, kind: Kind, chunk: int = 1024) -> np.ndarray:
    """max_j (type A) / min_j (type B) of k_{p_j, omega_j}(x_i)."""
    out = np.empty(len(xs))
    red = np.max if kind is Kind.A else np.min
    for s in range(0, len(xs), chunk):
        d2 = squared_distances(xs[s:s + chunk], ps)
        out[s:s + chunk] = red((beta * beta - d2) / (2 * beta) + omega[None, :], axis=1)
    return out


def _envelope_second(ps, xs, zeta, beta, kind: Kind, chunk: int = 1024) -> np.ndarray:
    """min_i (type A) / max_i (type B) of h_{x_i, zeta_i}(p_j)."""
    out = np.empty(len(ps))
    red = np.min if kind is Kind.A else np.max
    for s in range(0, len(ps), chunk):
        d2 = squared_distances(ps[s:s + chunk], xs)
        out[s:s + chunk] = red((d2 - beta * beta) / (2 * beta) + zeta[None, :], axis=1)
    return out


def c_transform_pair(pair: ReflectorPair, spec: ProblemSpec | None = None) -> ReflectorPair:
    """Tighten an admissible pair: zeta from the omega-envelope, then omega from the new zeta."""
    xs, ps, beta = pair.source_points, pair.target_points, pair.beta
    zeta = _envelope_first(xs, ps, pair.omega, beta, pair.kind)
    omega = _envelope_second(ps, xs, zeta, beta, pair.kind)
    return pair.with_heights(zeta, omega)


def functional_F(pair: ReflectorPair, spec: ProblemSpec) -> float:
    """Intensity-weighted mean vertical separation ``sum zeta_i I_i - sum omega_j L_j``."""
    if len(pair.zeta) != len(spec.source) or len(pair.omega) != len(spec.target):
        raise InvalidArgumentError("pair and problem supports differ in size")
    return float(np.dot(pair.zeta, spec.source.weights) - np.dot(pair.omega, spec.target.weights))


def apply_gauge(pair: ReflectorPair, spec: ProblemSpec, gauge: str = "balanced") -> ReflectorPair:
    """Fix the free vertical translation of the mirror system.

    ``balanced`` makes the weighted duals equal (``<phi, I> == <psi, L>``),
    which puts flat mirrors of the identity instance at ``beta/2`` and ``0``;
    ``min_zeta`` anchors ``min(zeta) = 0``; ``none`` leaves heights alone.
    """
    if gauge == "none":
        return pair
    if gauge == "min_zeta":
        return pair.shifted(-float(pair.zeta.min()), gauge=gauge)
    if gauge == "balanced":
        phi, psi = reflectors_to_duals(pair)
        a, b = spec.source.weights, spec.target.weights
        s = (np.dot(phi, a) - np.dot(psi, b)) / (2.0 * pair.beta * a.sum())
        return pair.shifted(float(s), gauge=gauge)
    raise InvalidArgumentError(f"unknown gauge {gauge!r}; expected one of {GAUGES}")


def duals_to_reflectors(duals: DualPotentials, spec: ProblemSpec,
                        direction: Direction = Direction.MIN_COST, *,
                        gauge: str = "balanced", tighten: bool = True,
                        cost: np.ndarray | None = None) -> ReflectorPair:
    """Mirror heights ``zeta = beta/2 - phi/beta``, ``omega = psi/beta`` from transport duals."""
    direction = Direction(direction)
    C = cost_matrix(spec.source.points, spec.target.points) if cost is None else cost
    viol = duals.violation(C, direction)
    if viol > 1e-9:
        raise InvalidArgumentError(f"dual potentials infeasible by {viol:.3e}")
    beta = spec.beta
    pair = ReflectorPair(spec.source.points, spec.target.points,
                         beta / 2.0 - np.asarray(duals.phi) / beta,
                         np.asarray(duals.psi) / beta, beta, direction.kind)
    if tighten:
        pair = c_transform_pair(pair, spec)
    return apply_gauge(pair, spec, gauge)


def reflectors_to_duals(pair: ReflectorPair) -> tuple[np.ndarray, np.ndarray]:
    beta = pair.beta
    return beta * (beta / 2.0 - pair.zeta), beta * pair.omega


def solve_reflectors(spec: ProblemSpec, kind: Kind | str = Kind.A, *, method: str = "exact",
                     gauge: str = "balanced", **solver_options) -> tuple[ReflectorPair, SolveResult]:
    """Solve the transport problem for ``kind`` and return the tightened mirror pair."""
    direction = Direction.from_kind(kind)
    if Method(method) is Method.EXACT:
        res = solve_exact(spec, direction, **solver_options)
    else:
        res = solve_entropic(spec, direction, **solver_options)
    pair = duals_to_reflectors(res.duals, spec, direction, gauge=gauge,
                               cost=solver_options.get("cost"))
    return pair, res
