"""Exact solver for the linear transportation problem min <M, T> over U(h, hbar).

A transportation-specialized network simplex with deterministic pivoting
(most negative reduced cost, first index order on ties).  Degeneracy is
removed by an internal
epsilon perturbation of the marginals; the returned plan is re-solved on the
optimal basis tree with the unperturbed marginals, so marginals are exact.
The pivot loop is numba-compiled; everything is float64.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit


class OtInputError(ValueError):
    pass


@dataclass
class Coupling:
    """Transport plan with its prescribed marginals."""

    plan: np.ndarray
    source_marginal: np.ndarray
    target_marginal: np.ndarray

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.plan))

    @property
    def degenerate(self) -> bool:
        # fewer basic arcs carrying flow than a spanning tree has
        n, m = self.plan.shape
        return self.support_size < n + m - 1


@njit(cache=True, nogil=True)
def _network_simplex(M, a, b, eps):  # pragma: no cover - exercised via wrapper
    n, m = M.shape
    N = n + m
    nb = N - 1  # basis size

    # perturbed marginals, keeps every basic flow strictly positive
    ap = a + eps
    bp = b.copy()
    bp[m - 1] += n * eps

    arc_i = np.empty(nb, dtype=np.int64)
    arc_j = np.empty(nb, dtype=np.int64)
    flow = np.empty(nb, dtype=np.float64)

    # northwest-corner initial basis
    ra = ap.copy()
    rb = bp.copy()
    i = 0
    j = 0
    for k in range(nb):
        arc_i[k] = i
        arc_j[k] = j
        t = ra[i] if ra[i] <= rb[j] else rb[j]
        flow[k] = t
        ra[i] -= t
        rb[j] -= t
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1

    parent = np.empty(N, dtype=np.int64)
    parent_arc = np.empty(N, dtype=np.int64)
    depth = np.empty(N, dtype=np.int64)
    pot = np.empty(N, dtype=np.float64)
    head = np.empty(N + 1, dtype=np.int64)
    nxt = np.empty(2 * nb, dtype=np.int64)
    adj = np.empty(2 * nb, dtype=np.int64)
    stack = np.empty(N, dtype=np.int64)
    upath = np.empty(N, dtype=np.int64)
    wpath = np.empty(N, dtype=np.int64)
    cyc_arc = np.empty(N, dtype=np.int64)

    tol = 1e-12
    max_pivots = 400 * N + 1000
    for _pivot in range(max_pivots):
        # rebuild tree adjacency (arc k joins row arc_i[k] and col n+arc_j[k])
        deg = np.zeros(N, dtype=np.int64)
        for k in range(nb):
            deg[arc_i[k]] += 1
            deg[n + arc_j[k]] += 1
        head[0] = 0
        for v in range(N):
            head[v + 1] = head[v] + deg[v]
        fill = head[:N].copy()
        for k in range(nb):
            u = arc_i[k]
            w = n + arc_j[k]
            adj[fill[u]] = k
            nxt[fill[u]] = w
            fill[u] += 1
            adj[fill[w]] = k
            nxt[fill[w]] = u
            fill[w] += 1

        # DFS from node 0: parents, depths and dual potentials
        parent[:] = -2
        parent[0] = -1
        parent_arc[0] = -1
        depth[0] = 0
        pot[0] = 0.0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            u = stack[top]
            for p in range(head[u], head[u + 1]):
                w = nxt[p]
                if parent[w] == -2:
                    parent[w] = u
                    parent_arc[w] = adj[p]
                    depth[w] = depth[u] + 1
                    k = adj[p]
                    c = M[arc_i[k], arc_j[k]]
                    pot[w] = c - pot[u]
                    stack[top] = w
                    top += 1

        # entering arc: most negative reduced cost, ties broken by the first
        # (i, j) in row-major order, so the pivot sequence is deterministic
        ei = -1
        ej = -1
        best = -tol
        for ii in range(n):
            pu = pot[ii]
            for jj in range(m):
                r = M[ii, jj] - pu - pot[n + jj]
                if r < best:
                    best = r
                    ei = ii
                    ej = jj
        if ei < 0:
            return arc_i, arc_j, flow, 0

        # cycle: entering arc plus the tree path from row ei to col n+ej;
        # signs alternate around the cycle, entering arc carries +
        uu = ei
        ww = n + ej
        nu = 0
        nw = 0
        while depth[uu] > depth[ww]:
            upath[nu] = parent_arc[uu]
            nu += 1
            uu = parent[uu]
        while depth[ww] > depth[uu]:
            wpath[nw] = parent_arc[ww]
            nw += 1
            ww = parent[ww]
        while uu != ww:
            upath[nu] = parent_arc[uu]
            nu += 1
            uu = parent[uu]
            wpath[nw] = parent_arc[ww]
            nw += 1
            ww = parent[ww]
        nc = nu + nw
        for t in range(nu):
            cyc_arc[t] = upath[t]
        for t in range(nw):
            cyc_arc[nu + t] = wpath[nw - 1 - t]
        # path position t gets sign -1 when t is even (first arc undoes the
        # entering arc's +flow at row ei)

        # ratio test: theta = min flow over minus-arcs, first attained wins
        theta = 1e300
        leave = -1
        for t in range(0, nc, 2):
            k = cyc_arc[t]
            if flow[k] < theta:
                theta = flow[k]
                leave = t
        k_leave = cyc_arc[leave]
        for t in range(nc):
            if t % 2 == 0:
                flow[cyc_arc[t]] -= theta
            else:
                flow[cyc_arc[t]] += theta
        arc_i[k_leave] = ei
        arc_j[k_leave] = ej
        flow[k_leave] = theta

    return arc_i, arc_j, flow, 1


@njit(cache=True, nogil=True)
def _tree_flows(arc_i, arc_j, a, b):  # pragma: no cover - exercised via wrapper
    """Exact flows on a basis tree for the given (unperturbed) marginals."""
    n = a.shape[0]
    m = b.shape[0]
    N = n + m
    nb = N - 1
    supply = np.empty(N, dtype=np.float64)
    supply[:n] = a
    supply[n:] = -b
    deg = np.zeros(N, dtype=np.int64)
    for k in range(nb):
        deg[arc_i[k]] += 1
        deg[n + arc_j[k]] += 1
    arcs_of = np.full((N, 2), -1, dtype=np.int64)
    cnt = np.zeros(N, dtype=np.int64)
    # leaf elimination needs, per node, some incident unused arc; store lazily
    used = np.zeros(nb, dtype=np.bool_)
    flow = np.zeros(nb, dtype=np.float64)
    for _ in range(nb):
        # find a leaf (degree 1) and resolve its single remaining arc
        leaf = -1
        for v in range(N):
            if deg[v] == 1:
                leaf = v
                break
        k_found = -1
        for k in range(nb):
            if not used[k] and (arc_i[k] == leaf or n + arc_j[k] == leaf):
                k_found = k
                break
        k = k_found
        u = arc_i[k]
        w = n + arc_j[k]
        other = w if u == leaf else u
        # flow on a row->col arc equals the leaf's remaining supply (sign fixed)
        f = supply[leaf] if leaf < n else -supply[leaf]
        flow[k] = f
        supply[leaf] = 0.0
        if other < n:
            supply[other] -= f
        else:
            supply[other] += f
        used[k] = True
        deg[leaf] -= 1
        deg[other] -= 1
    return flow


def solve_exact_ot(cost: np.ndarray, h: np.ndarray, h_bar: np.ndarray,
                   _eps: float = 1e-12) -> tuple[Coupling, float]:
    """Exact optimum of the transportation LP; deterministic pivoting."""
    M = np.ascontiguousarray(cost, dtype=np.float64)
    a = np.ascontiguousarray(h, dtype=np.float64)
    b = np.ascontiguousarray(h_bar, dtype=np.float64)
    if M.ndim != 2 or M.shape != (a.shape[0], b.shape[0]):
        raise OtInputError("cost shape must match marginal lengths")
    if not np.all(np.isfinite(M)):
        raise OtInputError("cost entries must be finite")
    for v in (a, b):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9 or not np.all(np.isfinite(v)):
            raise OtInputError("marginals must lie on the probability simplex")
    arc_i, arc_j, _, status = _network_simplex(M, a, b, _eps)
    if status != 0:
        raise RuntimeError("network simplex exceeded its pivot budget")
    flow = _tree_flows(arc_i, arc_j, a, b)
    n, m = M.shape
    T = np.zeros((n, m))
    for k in range(n + m - 1):
        f = flow[k]
        if f > 1e-15:
            T[arc_i[k], arc_j[k]] += f
    objective = float(np.sum(M * T))
    return Coupling(T, a.copy(), b.copy()), objective


def brute_force_ot(cost: np.ndarray, h: np.ndarray, h_bar: np.ndarray) -> float:
    """Reference objective by enumerating every basic feasible solution.

    Vertices of the transportation polytope are flows on spanning trees of
    the complete bipartite support graph; only tiny instances are allowed.
    """
    M = np.asarray(cost, dtype=np.float64)
    a = np.asarray(h, dtype=np.float64)
    b = np.asarray(h_bar, dtype=np.float64)
    n, m = M.shape
    if n > 4 or m > 4:
        raise OtInputError("brute_force_ot only supports sizes up to 4x4")
    cells = list(itertools.product(range(n), range(m)))
    best = np.inf
    for support in itertools.combinations(cells, n + m - 1):
        # spanning tree check via union-find over the n+m bipartite nodes
        root = list(range(n + m))

        def find(x):
            while root[x] != x:
                root[x] = root[root[x]]
                x = root[x]
            return x

        ok = True
        for (i, j) in support:
            ri, rj = find(i), find(n + j)
            if ri == rj:
                ok = False
                break
            root[ri] = rj
        if not ok:
            continue
        flow = _tree_flows(np.array([i for i, _ in support], dtype=np.int64),
                           np.array([j for _, j in support], dtype=np.int64), a, b)
        if np.any(flow < -1e-12):
            continue
        obj = sum(M[i, j] * f for (i, j), f in zip(support, flow))
        best = min(best, obj)
    return float(best)
