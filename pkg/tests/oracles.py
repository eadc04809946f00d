"""Independent reference solutions used to check the solver.

Nothing here imports the package under test.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog


def sqdist(xs, ps):
    xs = np.asarray(xs, dtype=float).reshape(len(xs), -1)
    ps = np.asarray(ps, dtype=float).reshape(len(ps), -1)
    return ((xs[:, None, :] - ps[None, :, :]) ** 2).sum(-1)


def sort_match_1d(x, p, anti: bool = False):
    """Monotone (or anti-monotone) matching of equal-size, equal-weight 1D supports.

    Returns ``match`` with ``match[i]`` the index of the target assigned to ``x[i]``.
    """
    x = np.asarray(x, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    ox = np.argsort(x, kind="stable")
    op = np.argsort(p, kind="stable")
    if anti:
        op = op[::-1]
    match = np.empty(len(x), dtype=int)
    match[ox] = op
    return match


def sort_cost_1d(x, p, anti: bool = False) -> float:
    """Quadratic cost ``sum |x_i - p_match(i)|^2 / 2 / n`` of the 1D sort oracle."""
    m = sort_match_1d(x, p, anti)
    x = np.asarray(x, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    return float(0.5 * np.mean((x - p[m]) ** 2))


def brute_force_assignment(xs, ps, maximize: bool = False):
    """Exhaustive search over permutations; returns ``(cost, perm)`` with weight ``1/n`` per pair."""
    C = 0.5 * sqdist(xs, ps)
    n = len(C)
    best, arg = None, None
    for perm in itertools.permutations(range(n)):
        c = C[np.arange(n), perm].sum() / n
        if best is None or (c > best if maximize else c < best):
            best, arg = c, perm
    return float(best), np.asarray(arg)


def hungarian_assignment(xs, ps, maximize: bool = False):
    """Optimal assignment by the Hungarian method; weight ``1/n`` per pair."""
    C = 0.5 * sqdist(xs, ps)
    r, c = linear_sum_assignment(C, maximize=maximize)
    perm = np.empty(len(C), dtype=int)
    perm[r] = c
    return float(C[r, c].sum() / len(C)), perm


def lp_transport(C, a, b, maximize: bool = False):
    """Dense transport LP by HiGHS; returns ``(cost, plan)``."""
    C = np.asarray(C, dtype=float)
    ns, nt = C.shape
    A_eq = np.zeros((ns + nt, ns * nt))
    for i in range(ns):
        A_eq[i, i * nt:(i + 1) * nt] = 1.0
    for j in range(nt):
        A_eq[ns + j, j::nt] = 1.0
    sign = -1.0 if maximize else 1.0
    res = linprog(sign * C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(sign * res.fun), res.x.reshape(ns, nt)
