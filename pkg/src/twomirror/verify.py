"""Independent checks of a solved mirror pair.

None of these checks re-run the solver.  They work from the sampled heights
(and, where stated, the transport plan) and report residuals; pass/fail
thresholds live in :class:`Thresholds` so a report can state what it was
judged against.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import InvalidArgumentError, Kind, ProblemSpec, ReflectorPair, TransportPlan
from .ot import functional_F
from .reflector import GridSpec, first_gradient, potential_V, second_gradient, tie_mask, trace_support

Density = Callable[[np.ndarray], np.ndarray]


def _angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise angle between vectors, accurate near 0 and pi."""
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=-1), np.linalg.norm(u + v, axis=-1))


def check_opl(pair: ReflectorPair, spec: ProblemSpec | None = None) -> float:
    """Largest deviation of the reduced optical path ``z - w + t`` from ``beta`` over the support."""
    tr = trace_support(pair)
    return float(np.abs(tr.opl_reduced - pair.beta).max())


@dataclass(frozen=True)
class ReflectionResiduals:
    first: np.ndarray
    second: np.ndarray

    @property
    def max(self) -> float:
        return float(max(self.first.max(), self.second.max()))


def reflection_residuals(pair: ReflectorPair) -> ReflectionResiduals:
    """Per-source-point angle residuals of the reflection law at both mirrors.

    Mirror slopes come from the ray map: ``grad z(x_i)`` uses the centroid of
    the supporting targets and ``grad w(p_j)`` the centroid of the preimage.
    Residual one compares the ray reflected at the first mirror with the
    chord to the second mirror; residual two compares the ray leaving the
    second mirror with the vertical.
    """
    n = pair.source_points.shape[1]
    tr = trace_support(pair)
    gz = first_gradient(pair)
    gw = second_gradient(pair)[tr.target_index]
    k = np.zeros(n + 1)
    k[-1] = 1.0

    u1 = np.hstack([-gz, np.ones((len(gz), 1))])
    u1 /= np.linalg.norm(u1, axis=1, keepdims=True)
    y = k[None, :] - 2.0 * (u1 @ k)[:, None] * u1
    chord = np.hstack([pair.target_points[tr.target_index] - pair.source_points,
                       (tr.w - tr.z)[:, None]])
    degenerate = np.linalg.norm(chord, axis=1) == 0
    first = np.where(degenerate, 0.0, _angle(y, np.where(degenerate[:, None], y, chord)))

    u2 = np.hstack([-gw, np.ones((len(gw), 1))])
    u2 /= np.linalg.norm(u2, axis=1, keepdims=True)
    y2 = y - 2.0 * np.einsum("ij,ij->i", y, u2)[:, None] * u2
    second = _angle(y2, np.broadcast_to(k, y2.shape))
    return ReflectionResiduals(first, second)


def check_reflection_law(pair: ReflectorPair, spec: ProblemSpec | None = None,
                         d: float | None = None) -> float:
    """Max angle residual (radians) of the reflection law over the support.

    The front offset ``d`` only moves the output plane along the axis and does
    not enter the angles; it is accepted so callers can pass the design value.
    """
    return reflection_residuals(pair).max


@dataclass(frozen=True)
class PushforwardResult:
    map_l1: float
    plan_l1: float | None = None


def grid_bins(points, counts) -> np.ndarray:
    """Label each point with its cell in an equal partition of the bounding box."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (pts.shape[1],))
    if np.any(counts < 1):
        raise InvalidArgumentError("bin counts must be positive")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    idx = np.floor((pts - lo) / span * counts).astype(int)
    idx = np.clip(idx, 0, counts - 1)
    return np.ravel_multi_index(tuple(idx.T), tuple(counts))


def check_pushforward(pair: ReflectorPair, spec: ProblemSpec, bins,
                      plan: TransportPlan | None = None) -> PushforwardResult:
    """L1 discrepancy (fraction of total mass) between delivered and prescribed bin masses.

    ``bins`` assigns every target support point a nonnegative bin label.  The
    map-based figure sends each source weight to its single-valued ray image;
    the plan-based figure splits it according to ``plan``.
    """
    bins = np.asarray(bins)
    nt = len(spec.target)
    if bins.shape != (nt,) or not np.issubdtype(bins.dtype, np.integer) or np.any(bins < 0):
        raise InvalidArgumentError("bins must be one nonnegative integer label per target point")
    nb = int(bins.max()) + 1
    a = np.asarray(spec.source.weights)
    b = np.asarray(spec.target.weights)
    M = a.sum()
    want = np.bincount(bins, weights=b, minlength=nb)
    j = trace_support(pair).target_index
    got = np.bincount(bins[j], weights=a, minlength=nb)
    map_l1 = float(np.abs(got - want).sum() / M)
    plan_l1 = None
    if plan is not None:
        got_p = np.bincount(bins[plan.cols], weights=plan.mass, minlength=nb)
        plan_l1 = float(np.abs(got_p - want).sum() / M)
    return PushforwardResult(map_l1, plan_l1)


def energy_balance_error(spec: ProblemSpec) -> float:
    return abs(spec.target.total_mass - spec.source.total_mass) / spec.source.total_mass


@dataclass(frozen=True)
class MongeAmpereLevel:
    """One refinement level: a solved pair and the grid the finite differences use.

    The grid need not coincide with the support.  The envelope potential is
    piecewise quadratic with kinks between support points, so a stencil tied
    to the support spacing sees those kinks at every level; a fixed grid shared
    by all levels measures convergence instead.
    """

    pair: ReflectorPair
    grid: GridSpec


def monge_ampere_field(pair: ReflectorPair, grid: GridSpec, source_density: Density,
                       target_density: Density) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``|L(grad V) |det Hess V| - I| / max I`` at interior grid nodes.

    Derivatives are central differences of the envelope potential with the
    grid spacing as step.  Returns ``(interior_nodes, residuals)``.
    """
    n = grid.dim
    if n not in (1, 2):
        raise InvalidArgumentError("Monge-Ampere check supports 1D and 2D grids")
    if any(s < 3 for s in grid.shape):
        raise InvalidArgumentError("grid needs at least 3 nodes per axis")
    nodes = grid.nodes()
    V = potential_V(nodes, pair).reshape(grid.shape)
    h = grid.spacing
    if n == 1:
        hx = h[0]
        grad = ((V[2:] - V[:-2]) / (2 * hx))[:, None]
        det = (V[2:] - 2 * V[1:-1] + V[:-2]) / hx**2
        inner = nodes.reshape(grid.shape + (1,))[1:-1]
    else:
        hx, hy = h
        c = V[1:-1, 1:-1]
        vxx = (V[2:, 1:-1] - 2 * c + V[:-2, 1:-1]) / hx**2
        vyy = (V[1:-1, 2:] - 2 * c + V[1:-1, :-2]) / hy**2
        vxy = (V[2:, 2:] - V[2:, :-2] - V[:-2, 2:] + V[:-2, :-2]) / (4 * hx * hy)
        gx = (V[2:, 1:-1] - V[:-2, 1:-1]) / (2 * hx)
        gy = (V[1:-1, 2:] - V[1:-1, :-2]) / (2 * hy)
        grad = np.stack([gx.ravel(), gy.ravel()], axis=1)
        det = (vxx * vyy - vxy**2).ravel()
        inner = nodes.reshape(grid.shape + (2,))[1:-1, 1:-1]
    inner = inner.reshape(-1, n)
    I_all = np.asarray(source_density(nodes), dtype=np.float64)
    I_max = float(I_all.max())
    if not I_max > 0:
        raise InvalidArgumentError("source density vanishes on the grid")
    lhs = np.asarray(target_density(grad), dtype=np.float64) * np.abs(np.ravel(det))
    res = np.abs(lhs - np.asarray(source_density(inner), dtype=np.float64)) / I_max
    return inner, res


def check_monge_ampere(levels: Sequence[MongeAmpereLevel], source_density: Density,
                       target_density: Density) -> list[float]:
    """Median interior Monge-Ampere residual at each refinement level."""
    if len(levels) < 2:
        raise InvalidArgumentError("need at least two refinement levels")
    return [float(np.median(monge_ampere_field(lv.pair, lv.grid, source_density,
                                               target_density)[1]))
            for lv in levels]


# ---------------------------------------------------------------------------
# optimality certificate
# ---------------------------------------------------------------------------

def random_feasible_plans(a, b, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Dense feasible couplings of ``a`` and ``b``.

    Each is a random mixture of the independent coupling with a north-west
    corner vertex taken in a random row/column order.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    indep = np.outer(a, b) / a.sum()
    plans = []
    for _ in range(n):
        ri = rng.permutation(len(a))
        ci = rng.permutation(len(b))
        G = np.zeros((len(a), len(b)))
        ra, cb = a[ri].copy(), b[ci].copy()
        i = j = 0
        while i < len(a) and j < len(b):
            m = min(ra[i], cb[j])
            G[ri[i], ci[j]] += m
            ra[i] -= m
            cb[j] -= m
            if ra[i] <= cb[j]:
                i += 1
            else:
                j += 1
        t = rng.random()
        plans.append(t * indep + (1.0 - t) * G)
    return plans


def random_admissible_pairs(pair: ReflectorPair, n: int, rng: np.random.Generator,
                            spread: float | None = None) -> list[ReflectorPair]:
    """Admissible (type A) or reverse-admissible (type B) pairs near ``pair``.

    ``omega`` is perturbed at random and ``zeta`` is set to the envelope plus
    (A) or minus (B) a random nonnegative margin, so each sample satisfies the
    pair's admissibility inequality without being tight.
    """
    from .ot import _envelope_first

    scale = spread if spread is not None else 0.1 * max(pair.beta, 1e-12)
    sign = 1.0 if pair.kind is Kind.A else -1.0
    out = []
    for _ in range(n):
        omega = pair.omega + scale * rng.uniform(-1.0, 1.0, len(pair.omega))
        zeta = _envelope_first(pair.source_points, pair.target_points, omega, pair.beta, pair.kind)
        zeta = zeta + sign * scale * rng.random(len(zeta))
        out.append(pair.with_heights(zeta, omega, gauge="none"))
    return out


@dataclass
class Certificate:
    slackness_max: float
    duality_identity_residual: float
    functional: float
    cost: float
    random_costs: list = field(default_factory=list)
    slackness_ok: bool = False
    duality_ok: bool = False
    ordering_ok: bool = False
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.slackness_ok and self.duality_ok and self.ordering_ok


def certify_optimality(pair: ReflectorPair, spec: ProblemSpec, plan: TransportPlan,
                       n_random: int = 100, rng: np.random.Generator | None = None,
                       tol: float = 1e-9) -> Certificate:
    """Check complementary slackness, the functional/cost identity, and cost ordering.

    Failures are listed in ``violations``; nothing is raised.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    beta = pair.beta
    gaps = pair.gap_matrix()[plan.rows, plan.cols]
    slack = float(np.abs(gaps).max()) if len(gaps) else 0.0
    M = spec.source.total_mass
    F = functional_F(pair, spec)
    expected = 0.5 * beta * M - plan.cost / beta
    ident = abs(F - expected) / max(1.0, abs(expected))
    C = 0.5 * ((spec.source.points[:, None, :] - spec.target.points[None, :, :]) ** 2).sum(-1)
    costs = [float((G * C).sum()) for G in
             random_feasible_plans(spec.source.weights, spec.target.weights, n_random, rng)]
    cert = Certificate(slack, ident, F, plan.cost, costs)
    cert.slackness_ok = slack <= tol
    cert.duality_ok = ident <= tol
    rel = tol * max(1.0, abs(plan.cost))
    if pair.kind is Kind.A:
        bad = [c for c in costs if c < plan.cost - rel]
    else:
        bad = [c for c in costs if c > plan.cost + rel]
    cert.ordering_ok = not bad
    if not cert.slackness_ok:
        cert.violations.append(f"complementary slackness violated by {slack:.3e}")
    if not cert.duality_ok:
        cert.violations.append(
            f"functional {F:.12g} differs from beta*M/2 - cost/beta = {expected:.12g}")
    for c in bad:
        cert.violations.append(f"random plan cost {c:.12g} beats plan cost {plan.cost:.12g}")
    return cert


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class Thresholds:
    """Pass limits.  ``reflection=None`` reports the angle residual without judging it:
    on a discrete solution it measures discretization error, and the meaningful
    test is its decrease under refinement."""

    opl: float = 1e-9
    reflection: float | None = None
    pushforward_plan: float = 1e-10
    energy_balance: float = 1e-12
    refinement_floor: float = 1e-12


def _non_increasing(seq, floor: float = 0.0):
    """True if no step increases by more than ``floor`` (roundoff on exact instances)."""
    if not seq or len(seq) < 2:
        return None
    return bool(all(b <= a + floor for a, b in zip(seq, seq[1:])))


@dataclass
class VerificationReport:
    kind: str
    opl_max_abs_dev: float | None = None
    reflection_max_angle_residual: float | None = None
    pushforward_l1_error: float | None = None
    pushforward_map_l1_error: float | None = None
    monge_ampere_residuals: list | None = None
    reflection_refinement_residuals: list | None = None
    energy_balance_rel_error: float | None = None
    cost_A: float | None = None
    cost_B: float | None = None
    functional: float | None = None
    random_plan_costs: dict | None = None
    certificate_violations: list = field(default_factory=list)
    certificate_ok: bool | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    metadata: dict = field(default_factory=dict)

    def passed(self) -> dict:
        """Pass flags recomputed from the residuals and the thresholds stored alongside."""
        t = self.thresholds
        out = {}

        def le(v, lim):
            return None if v is None or lim is None else bool(v <= lim)

        out["opl"] = le(self.opl_max_abs_dev, t.opl)
        out["reflection"] = le(self.reflection_max_angle_residual, t.reflection)
        out["pushforward"] = le(self.pushforward_l1_error, t.pushforward_plan)
        out["energy_balance"] = le(self.energy_balance_rel_error, t.energy_balance)
        out["monge_ampere"] = _non_increasing(self.monge_ampere_residuals, t.refinement_floor)
        out["reflection_refinement"] = _non_increasing(self.reflection_refinement_residuals,
                                                  t.refinement_floor)
        out["certificate"] = self.certificate_ok
        return out

    @property
    def all_passed(self) -> bool:
        return all(v is not False for v in self.passed().values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationReport":
        d = dict(d)
        d.pop("passed", None)
        d["thresholds"] = Thresholds(**d.get("thresholds", {}))
        return cls(**d)


def verify_pair(pair: ReflectorPair, spec: ProblemSpec, plan: TransportPlan | None = None, *,
                bins=None, n_random: int = 100, seed: int = 0,
                levels: Sequence[MongeAmpereLevel] | None = None,
                source_density: Density | None = None, target_density: Density | None = None,
                thresholds: Thresholds | None = None) -> VerificationReport:
    """Run every applicable check on one solved pair."""
    rep = VerificationReport(kind=pair.kind.value, thresholds=thresholds or Thresholds())
    rep.opl_max_abs_dev = check_opl(pair, spec)
    rep.reflection_max_angle_residual = check_reflection_law(pair, spec)
    if bins is None:
        bins = grid_bins(spec.target.points, 4)
    pf = check_pushforward(pair, spec, bins, plan)
    rep.pushforward_l1_error = pf.plan_l1
    rep.pushforward_map_l1_error = pf.map_l1
    rep.energy_balance_rel_error = energy_balance_error(spec)
    rep.functional = functional_F(pair, spec)
    if plan is not None:
        cert = certify_optimality(pair, spec, plan, n_random, np.random.default_rng(seed))
        rep.certificate_ok = cert.passed
        rep.certificate_violations = list(cert.violations)
        if pair.kind is Kind.A:
            rep.cost_A = plan.cost
        else:
            rep.cost_B = plan.cost
        if cert.random_costs:
            rc = np.asarray(cert.random_costs)
            rep.random_plan_costs = {"n": int(len(rc)), "min": float(rc.min()),
                                     "mean": float(rc.mean()), "max": float(rc.max())}
    if levels and len(levels) >= 2:
        rep.reflection_refinement_residuals = [check_reflection_law(lv.pair) for lv in levels]
    if levels and len(levels) >= 2 and source_density is not None and target_density is not None:
        rep.monge_ampere_residuals = check_monge_ampere(levels, source_density, target_density)
    return rep
