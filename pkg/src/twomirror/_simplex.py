"""Network simplex for the dense transportation problem.

The basis is a spanning tree on ``ns + nt + 1`` nodes: supply nodes
``0..ns-1``, demand nodes ``ns..ns+nt-1`` and an artificial root.  The
starting tree either joins every node to the root by a big-M arc or hangs the
components of a greedy matrix-minimum plan from it.  Trees are kept strongly feasible (zero-flow arcs point
away from the root), which rules out cycling under any entering rule.

Node potentials ``pi`` use the convention ``rc(u -> v) = c(u, v) - pi[u] + pi[v]``
so for real arcs ``phi_i = pi[i]`` and ``psi_j = -pi[ns + j]``.
"""

from __future__ import annotations

import numba as nb
import numpy as np

PIVOT_RULES = {"block": 0, "dantzig": 1, "first": 2}


@nb.njit(cache=True)
def _link(h, node, head, nxt, prv):
    # half-edge h joins the incidence list of node
    nxt[h] = head[node]
    prv[h] = -1
    if head[node] >= 0:
        prv[head[node]] = h
    head[node] = h


@nb.njit(cache=True)
def _unlink(h, node, head, nxt, prv):
    if prv[h] >= 0:
        nxt[prv[h]] = nxt[h]
    else:
        head[node] = nxt[h]
    if nxt[h] >= 0:
        prv[nxt[h]] = prv[h]


@nb.njit(cache=True)
def _hang(q, r, arc, bu, bv, bc, head, nxt, parent, parent_arc, depth, pi, queue):
    """Hang the subtree containing ``q`` from ``r`` through basis arc ``arc``.

    Parents, depths and potentials are recomputed only inside that subtree.
    Returns the number of nodes visited.
    """
    parent[q] = r
    parent_arc[q] = arc
    if r >= 0:
        depth[q] = depth[r] + 1
        if bu[arc] == r:
            pi[q] = pi[r] - bc[arc]
        else:
            pi[q] = pi[r] + bc[arc]
    else:
        depth[q] = 0
        pi[q] = 0.0
    tail = 0
    queue[tail] = q
    tail += 1
    hd = 0
    while hd < tail:
        u = queue[hd]
        hd += 1
        h = head[u]
        while h >= 0:
            k = h >> 1
            if k != parent_arc[u]:
                v = bv[k] if (h & 1) == 0 else bu[k]
                parent[v] = u
                parent_arc[v] = k
                depth[v] = depth[u] + 1
                if bu[k] == u:
                    pi[v] = pi[u] - bc[k]
                else:
                    pi[v] = pi[u] + bc[k]
                queue[tail] = v
                tail += 1
            h = nxt[h]
    return tail


@nb.njit(cache=True)
def _find(uf, u):
    while uf[u] != u:
        uf[u] = uf[uf[u]]
        u = uf[u]
    return u


@nb.njit(cache=True)
def _greedy_basis(C, a, b, root, big_m, bu, bv, bc, bf, bid, greedy):
    """Starting basis; matrix-minimum when ``greedy`` else all artificial.

    Arcs are filled in increasing cost order; each fill saturates a row or a
    column, so the positive arcs form a forest.  Every tree of the forest is
    hung from the root by one big-M arc carrying its (roundoff) imbalance;
    zero-flow hangers point away from the root, so the basis is strongly
    feasible.  Returns the number of basis arcs written.
    """
    ns, nt = C.shape
    ra = a.copy()
    rb = b.copy()
    order = np.argsort(C.ravel(), kind="mergesort") if greedy else np.empty(0, np.int64)
    uf = np.arange(ns + nt)
    m = 0
    open_rows = 0
    for i in range(ns):
        if ra[i] > 0:
            open_rows += 1
    open_cols = 0
    for j in range(nt):
        if rb[j] > 0:
            open_cols += 1
    for q in range(order.shape[0] if greedy else 0):
        if open_rows == 0 or open_cols == 0:
            break
        e = order[q]
        i = e // nt
        j = e - i * nt
        if ra[i] <= 0 or rb[j] <= 0:
            continue
        f = min(ra[i], rb[j])
        if ra[i] <= rb[j]:
            rb[j] -= f
            ra[i] = 0.0
            open_rows -= 1
            if rb[j] <= 0:
                rb[j] = 0.0
                open_cols -= 1
        else:
            ra[i] -= f
            rb[j] = 0.0
            open_cols -= 1
        bu[m] = i
        bv[m] = ns + j
        bc[m] = C[i, j]
        bf[m] = f
        bid[m] = e
        m += 1
        ri = _find(uf, i)
        rj = _find(uf, ns + j)
        uf[max(ri, rj)] = min(ri, rj)
    excess = np.zeros(ns + nt)
    for i in range(ns):
        excess[_find(uf, i)] += ra[i]
    for j in range(nt):
        excess[_find(uf, ns + j)] -= rb[j]
    for v in range(ns + nt):
        if _find(uf, v) != v:
            continue
        if excess[v] > 0:
            bu[m] = v
            bv[m] = root
            bf[m] = excess[v]
        else:
            bu[m] = root
            bv[m] = v
            bf[m] = -excess[v]
        bc[m] = big_m
        bid[m] = -1
        m += 1
    return m


@nb.njit(cache=True)
def _network_simplex(C, a, b, rule, block_size, max_iter, tol, greedy):
    ns, nt = C.shape
    N = ns + nt + 1
    root = N - 1
    m = N - 1
    cmax = 0.0
    for i in range(ns):
        for j in range(nt):
            if abs(C[i, j]) > cmax:
                cmax = abs(C[i, j])
    big_m = (cmax + 1.0) * N

    # basis arcs: u -> v, cost, flow, real-arc id (-1 for artificial)
    bu = np.empty(m, np.int64)
    bv = np.empty(m, np.int64)
    bc = np.empty(m, np.float64)
    bf = np.empty(m, np.float64)
    bid = np.empty(m, np.int64)
    nb_ = _greedy_basis(C, a, b, root, big_m, bu, bv, bc, bf, bid, greedy)
    if nb_ != m:
        return bid, bf, np.zeros(N), 0, 2

    # basis arc k has half-edges 2k (at bu[k]) and 2k + 1 (at bv[k])
    head = np.full(N, -1, np.int64)
    nxt = np.empty(2 * m, np.int64)
    prv = np.empty(2 * m, np.int64)
    for k in range(m):
        _link(2 * k, bu[k], head, nxt, prv)
        _link(2 * k + 1, bv[k], head, nxt, prv)
    parent = np.empty(N, np.int64)
    parent_arc = np.empty(N, np.int64)
    depth = np.empty(N, np.int64)
    pi = np.empty(N, np.float64)
    queue = np.empty(N, np.int64)
    kside = np.empty(N, np.int64)
    lside = np.empty(N, np.int64)
    if _hang(root, -1, -1, bu, bv, bc, head, nxt, parent, parent_arc, depth, pi,
             queue) != N:
        return bid, bf, pi, 0, 2

    n_arcs = ns * nt
    if block_size <= 0:
        block_size = max(64, int(np.sqrt(n_arcs)))
    cursor = 0
    it = 0
    status = 0
    while True:
        if it >= max_iter:
            status = 1
            break
        # --- pricing -------------------------------------------------------
        enter = -1
        best = -tol
        if rule == 1:
            for e in range(n_arcs):
                i = e // nt
                j = e - i * nt
                rc = C[i, j] - pi[i] + pi[ns + j]
                if rc < best:
                    best = rc
                    enter = e
        elif rule == 2:
            for e in range(n_arcs):
                i = e // nt
                j = e - i * nt
                rc = C[i, j] - pi[i] + pi[ns + j]
                if rc < best:
                    enter = e
                    break
        else:
            scanned = 0
            e = cursor
            while scanned < n_arcs:
                stop = min(scanned + block_size, n_arcs)
                while scanned < stop:
                    i = e // nt
                    j = e - i * nt
                    rc = C[i, j] - pi[i] + pi[ns + j]
                    if rc < best or (rc == best and enter >= 0 and e < enter):
                        best = rc
                        enter = e
                    scanned += 1
                    e += 1
                    if e == n_arcs:
                        e = 0
                if enter >= 0:
                    break
            cursor = e
        if enter < 0:
            break
        it += 1

        # --- cycle ---------------------------------------------------------
        ei = enter // nt
        ej = enter - ei * nt
        k = ei
        l = ns + ej
        nk = 0
        nl = 0
        x = k
        y = l
        while depth[x] > depth[y]:
            kside[nk] = x
            nk += 1
            x = parent[x]
        while depth[y] > depth[x]:
            lside[nl] = y
            nl += 1
            y = parent[y]
        while x != y:
            kside[nk] = x
            nk += 1
            x = parent[x]
            lside[nl] = y
            nl += 1
            y = parent[y]

        # k side: traversed apex -> k, arc parent->node is forward.
        # l side: traversed l -> apex, arc node->parent is forward.
        inf = np.inf
        dk = inf
        for q in range(nk):
            node = kside[q]
            arc = parent_arc[node]
            if bu[arc] == node and bf[arc] < dk:  # node -> parent: backward
                dk = bf[arc]
        dl = inf
        for q in range(nl):
            node = lside[q]
            arc = parent_arc[node]
            if bv[arc] == node and bf[arc] < dl:  # parent -> node: backward
                dl = bf[arc]
        leave = -1
        if dl <= dk:
            delta = dl
            # last blocking arc in cycle order: closest to the apex
            for q in range(nl):
                node = lside[q]
                arc = parent_arc[node]
                if bv[arc] == node and bf[arc] == delta:
                    leave = arc
        else:
            delta = dk
            # closest to k
            for q in range(nk):
                node = kside[q]
                arc = parent_arc[node]
                if bu[arc] == node and bf[arc] == delta:
                    leave = arc
                    break
        if leave < 0 or delta == inf:
            status = 3
            break

        for q in range(nk):
            node = kside[q]
            arc = parent_arc[node]
            if bu[arc] == node:
                bf[arc] -= delta
            else:
                bf[arc] += delta
        for q in range(nl):
            node = lside[q]
            arc = parent_arc[node]
            if bv[arc] == node:
                bf[arc] -= delta
            else:
                bf[arc] += delta
        _unlink(2 * leave, bu[leave], head, nxt, prv)
        _unlink(2 * leave + 1, bv[leave], head, nxt, prv)
        bu[leave] = k
        bv[leave] = l
        bc[leave] = C[ei, ej]
        bf[leave] = delta
        bid[leave] = enter
        _link(2 * leave, k, head, nxt, prv)
        _link(2 * leave + 1, l, head, nxt, prv)
        # the side cut off by the leaving arc holds l if it was on the l path
        if dl <= dk:
            _hang(l, k, leave, bu, bv, bc, head, nxt, parent, parent_arc, depth, pi, queue)
        else:
            _hang(k, l, leave, bu, bv, bc, head, nxt, parent, parent_arc, depth, pi, queue)

    return bid, bf, pi, it, status


@nb.njit(cache=True)
def _floyd_warshall(D):
    K = D.shape[0]
    for m in range(K):
        for i in range(K):
            dim = D[i, m]
            if dim == np.inf:
                continue
            for j in range(K):
                v = dim + D[m, j]
                if v < D[i, j]:
                    D[i, j] = v
    return D


@nb.njit(cache=True)
def _dijkstra_dense(L, src):
    K = L.shape[0]
    dist = np.full(K, np.inf)
    done = np.zeros(K, np.bool_)
    dist[src] = 0.0
    for _ in range(K):
        u = -1
        du = np.inf
        for v in range(K):
            if not done[v] and dist[v] < du:
                du = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        for v in range(K):
            nv = du + L[u, v]
            if nv < dist[v]:
                dist[v] = nv
    return dist


def transport_lp(C: np.ndarray, a: np.ndarray, b: np.ndarray, pivot: str = "block",
                 block_size: int = 0, max_iter: int | None = None, init: str = "artificial"):
    """Solve ``min <gamma, C>`` over couplings of ``a`` and ``b``.

    Returns ``(gamma_entries, phi, psi, iterations, status)`` where
    ``gamma_entries`` is ``(rows, cols, mass)`` for basic real arcs with
    positive flow.  ``status`` is 0 on optimality.  ``init`` selects the
    starting basis: ``"artificial"`` (every node on a big-M arc) or
    ``"greedy"`` (matrix-minimum plan, often fewer pivots on max-cost problems).
    """
    if init not in ("artificial", "greedy"):
        raise ValueError(f"unknown initial basis {init!r}")
    C = np.ascontiguousarray(C, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    ns, nt = C.shape
    if max_iter is None:
        max_iter = 50 * (ns + nt) * max(8, int(np.log2(ns + nt + 1))) + 10_000
    scale = max(1.0, float(np.abs(C).max()) if C.size else 1.0)
    tol = 1e-12 * scale * (ns + nt)
    bid, bf, pi, it, status = _network_simplex(C, a, b, PIVOT_RULES[pivot],
                                               int(block_size), int(max_iter), tol,
                                               init == "greedy")
    real = (bid >= 0) & (bf > 0)
    ids = bid[real]
    rows = ids // nt
    cols = ids - rows * nt
    mass = bf[real]
    order = np.lexsort((cols, rows))
    phi = pi[:ns].copy()
    psi = -pi[ns:ns + nt].copy()
    return (rows[order], cols[order], mass[order]), phi, psi, int(it), int(status)


def _components(ns: int, nt: int, rows, cols):
    parent = np.arange(ns + nt)

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for i, j in zip(rows.tolist(), cols.tolist()):
        ru, rv = find(i), find(ns + j)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    roots = np.array([find(u) for u in range(ns + nt)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels[:ns], labels[ns:], int(labels.max()) + 1


def center_duals(C, phi, psi, rows, cols, full_limit: int = 1200, n_roots: int = 64):
    """Move ``(phi, psi)`` to a relative-interior point of the optimal dual face.

    Basic optimal duals sit on a vertex of the dual face, so many non-support
    pairs are tight and the induced map has spurious ties.  The plan support
    splits the nodes into components whose relative offsets ``t`` are free
    subject to ``t_A - t_B <= W[A, B]`` (minimum reduced cost from rows of A to
    columns of B).  Shortest-path potentials from and to every component are
    vertices of that polytope; their average is returned.  For more than
    ``full_limit`` components only ``n_roots`` evenly spaced roots are used.
    """
    ns, nt = C.shape
    rlab, clab, K = _components(ns, nt, rows, cols)
    if K == 1:
        return phi, psi
    R = np.maximum(C - phi[:, None] - psi[None, :], 0.0)
    # W[A, B] = min over rows in A, cols in B
    col_order = np.argsort(clab, kind="stable")
    col_starts = np.searchsorted(clab[col_order], np.arange(K))
    Wr = np.minimum.reduceat(R[:, col_order], col_starts, axis=1)
    row_order = np.argsort(rlab, kind="stable")
    row_starts = np.searchsorted(rlab[row_order], np.arange(K))
    W = np.minimum.reduceat(Wr[row_order], row_starts, axis=0)
    np.fill_diagonal(W, 0.0)
    # edge B -> A has length W[A, B]
    L = np.ascontiguousarray(W.T)
    if K <= full_limit:
        D = _floyd_warshall(L.copy())
        t = 0.5 * (D.mean(axis=0) - D.mean(axis=1))
    else:
        roots = np.unique(np.linspace(0, K - 1, n_roots).round().astype(np.int64))
        LT = np.ascontiguousarray(L.T)
        acc = np.zeros(K)
        for r in roots:
            acc += _dijkstra_dense(L, r) - _dijkstra_dense(LT, r)
        t = 0.5 * acc / len(roots)
    return phi + t[rlab], psi - t[clab]
