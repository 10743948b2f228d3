"""GOSPA graph metrics.

For graphs ``a`` (``n`` vertices) and ``b`` (``m >= n`` vertices) the smaller
graph is padded with ``m - n`` dummy vertices and

    d = (1/m) * min_pi [ sum_j dv(pi(j), j) + 1/(m-1) * sum_{j<j'} pc(j, j') ]

over bijections ``pi`` from the vertices of ``b`` to real or dummy vertices
of ``a``.  A dummy vertex costs ``C_V``.  A vertex pair whose partners are
both real costs ``d_E`` between the two edge indicators; a pair involving a
dummy costs ``C_E`` (variant 1) or ``C_E * (1 + f)`` (variant 2) where ``f``
is the edge indicator in ``b``.  For ``m == 1`` there is no pair term.  With
one missing vertex and a perfect match elsewhere this charges
``C_V + C_E`` (variant 1) and ``C_V + C_E + deg * C_E / (m - 1)`` (variant 2),
and the value never exceeds ``C_V + C_E / 2`` and ``C_V + C_E`` respectively.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from numba import njit, prange

from .core import BaseMetricParams, ValidationError
from .graph import SpatialGraph

# numba falls back from an old TBB to another threading layer; the notice is noise
warnings.filterwarnings("ignore", message=".*TBB threading layer.*")

ORACLE_MAX = 7


@dataclass(frozen=True)
class GospaParams:
    base: BaseMetricParams = BaseMetricParams()
    variant: int = 1
    edge_metric: str = "indicator"
    exact_limit: int = 7

    def __post_init__(self):
        if self.variant not in (1, 2):
            raise ValidationError("GOSPA variant must be 1 or 2")
        if self.edge_metric not in ("indicator", "endpoint-aware"):
            raise ValidationError(f"unknown edge metric {self.edge_metric!r}")
        if self.exact_limit < 1:
            raise ValidationError("exact_limit must be positive")

    @classmethod
    def make(cls, C_V: float = 1.0, C_E: float = 1.0, variant: int = 1,
             edge_metric: str = "indicator", exact_limit: int = 7) -> "GospaParams":
        return cls(BaseMetricParams(C_V, C_E), variant, edge_metric, exact_limit)

    @property
    def C_V(self) -> float:
        return self.base.C_V

    @property
    def C_E(self) -> float:
        return self.base.C_E

    def cap(self, i: int | None = None) -> float:
        """``C_i = C_V + (i/2) C_E``, the bound on the metric."""
        i = self.variant if i is None else i
        return self.C_V + 0.5 * i * self.C_E

    def penalty(self, i: int | None = None) -> float:
        """``C~_i = C_V + i C_E``."""
        i = self.variant if i is None else i
        return self.C_V + i * self.C_E

    def to_dict(self) -> dict:
        return {"C_V": self.C_V, "C_E": self.C_E, "variant": self.variant,
                "edge_metric": self.edge_metric, "exact_limit": self.exact_limit}


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _vertex_costs(xa, xb, cv):
    n, m, d = xa.shape[0], xb.shape[0], xb.shape[1]
    D = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = xa[i, k] - xb[j, k]
                s += t * t
            s = np.sqrt(s)
            D[i, j] = s if s < cv else cv
    return D


@njit(cache=True)
def _pair_cost(Aa, Ab, D, s, s2, j, j2, n, ce, variant, endpoint):
    f = Ab[j, j2]
    if s < n and s2 < n:
        e = Aa[s, s2]
        if e != f:
            return ce
        if e == 0 or not endpoint:
            return 0.0
        c1 = 0.5 * (D[s, j] + D[s2, j2])
        c2 = 0.5 * (D[s, j2] + D[s2, j])
        c = c1 if c1 < c2 else c2
        return c if c < ce else ce
    if variant == 2:
        return ce * (1.0 + f)
    return ce


@njit(cache=True)
def _objective(slot, Aa, Ab, D, n, m, cv, ce, variant, endpoint, w):
    tot = 0.0
    for j in range(m):
        s = slot[j]
        tot += D[s, j] if s < n else cv
    pair = 0.0
    for j in range(m):
        for j2 in range(j + 1, m):
            pair += _pair_cost(Aa, Ab, D, slot[j], slot[j2], j, j2, n, ce, variant, endpoint)
    return tot + w * pair


@njit(cache=True)
def _hungarian(C):
    """Minimum-cost perfect assignment on a square matrix; returns row of each column."""
    m = C.shape[0]
    INF = 1e300
    u = np.zeros(m + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, np.int64)
    way = np.zeros(m + 1, np.int64)
    for i in range(1, m + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = C[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    row_of_col = np.empty(m, np.int64)
    for j in range(1, m + 1):
        row_of_col[j - 1] = p[j] - 1
    return row_of_col


@njit(cache=True)
def _local_search(slot, Aa, Ab, D, n, m, cv, ce, variant, endpoint, w):
    best = _objective(slot, Aa, Ab, D, n, m, cv, ce, variant, endpoint, w)
    improved = True
    while improved:
        improved = False
        for j in range(m):
            for j2 in range(j + 1, m):
                if slot[j] >= n and slot[j2] >= n:
                    continue
                t = slot[j]
                slot[j] = slot[j2]
                slot[j2] = t
                val = _objective(slot, Aa, Ab, D, n, m, cv, ce, variant, endpoint, w)
                if val < best - 1e-15:
                    best = val
                    improved = True
                else:
                    slot[j2] = slot[j]
                    slot[j] = t
    return best


@njit(cache=True)
def _exact(Aa, Ab, D, n, m, cv, ce, variant, endpoint, w, best):
    """Depth-first branch and bound over slots of the vertices of ``b``.

    Slot ``n`` stands for any dummy; dummies are interchangeable so only
    their count matters.  Every increment is nonnegative, and the bound adds
    the cheapest possible vertex cost of each unassigned vertex.
    """
    slot = np.full(m, -1, np.int64)
    nxt = np.zeros(m + 1, np.int64)
    used = np.zeros(n + 1, np.bool_)
    partial = np.zeros(m + 1)
    dummies = m - n
    depth = 0
    while depth >= 0:
        if depth == m:
            if partial[m] < best:
                best = partial[m]
            depth -= 1
            s = slot[depth]
            if s < n:
                used[s] = False
            else:
                dummies += 1
            slot[depth] = -1
            continue
        s = nxt[depth]
        while s < n and used[s]:
            s += 1
        if s > n or (s == n and dummies == 0):
            depth -= 1
            if depth >= 0:
                s0 = slot[depth]
                if s0 < n:
                    used[s0] = False
                else:
                    dummies += 1
                slot[depth] = -1
            continue
        nxt[depth] = s + 1
        j = depth
        inc = D[s, j] if s < n else cv
        pair = 0.0
        for jp in range(j):
            pair += _pair_cost(Aa, Ab, D, slot[jp], s, jp, j, n, ce, variant, endpoint)
        newp = partial[depth] + inc + w * pair
        if newp >= best:
            continue
        # optimistic completion: cheapest vertex cost of each remaining vertex
        if s < n:
            used[s] = True
            dleft = dummies
        else:
            dleft = dummies - 1
        lb = 0.0
        for jr in range(j + 1, m):
            mn = cv if dleft > 0 else 1e300
            for i in range(n):
                if not used[i] and D[i, jr] < mn:
                    mn = D[i, jr]
            lb += mn
        if newp + lb >= best:
            if s < n:
                used[s] = False
            continue
        slot[j] = s
        if s == n:
            dummies -= 1
        partial[depth + 1] = newp
        depth += 1
        nxt[depth] = 0
    return best


@njit(cache=True)
def _lex_less(xa, Aa, xb, Ab):
    """Total order on (coordinates, adjacency) used to orient equal-size pairs."""
    n = xa.shape[0]
    d = xa.shape[1]
    for i in range(n):
        for k in range(d):
            if xa[i, k] != xb[i, k]:
                return xa[i, k] < xb[i, k]
    for i in range(n):
        for k in range(n):
            if Aa[i, k] != Ab[i, k]:
                return Aa[i, k] < Ab[i, k]
    return False


@njit(cache=True)
def _gospa_kernel(xa, Aa, xb, Ab, cv, ce, variant, endpoint, exact_limit):
    n0, m0 = xa.shape[0], xb.shape[0]
    if n0 > m0 or (n0 == m0 and _lex_less(xb, Ab, xa, Aa)):
        xa, Aa, xb, Ab = xb, Ab, xa, Aa
    n, m = xa.shape[0], xb.shape[0]
    if m == 0:
        return 0.0, True
    if n == 0 and m == 1:
        return cv, True
    w = 1.0 / (m - 1) if m > 1 else 0.0
    D = _vertex_costs(xa, xb, cv)
    # vertex-only assignment seed on the padded square matrix
    C = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            C[i, j] = D[i, j] if i < n else cv
    row = _hungarian(C)
    slot = np.empty(m, np.int64)
    for j in range(m):
        slot[j] = row[j] if row[j] < n else n
    best = _local_search(slot, Aa, Ab, D, n, m, cv, ce, variant, endpoint, w)
    exact = m <= exact_limit
    if exact:
        best = _exact(Aa, Ab, D, n, m, cv, ce, variant, endpoint, w, best * (1 + 1e-12) + 1e-300)
    val = best / m
    cap = cv + 0.5 * variant * ce
    if val > cap:
        val = cap
    if val < 0.0:
        val = 0.0
    return val, exact


@njit(cache=True, parallel=True)
def _matrix_kernel(xa_all, Aa_all, offa, xb_all, Ab_all, offb, aoffa, aoffb,
                   cv, ce, variant, endpoint, exact_limit, symmetric):
    na = offa.shape[0] - 1
    nb = offb.shape[0] - 1
    d = xa_all.shape[1]
    out = np.zeros((na, nb))
    flag = np.ones((na, nb), np.bool_)
    for u in prange(na):
        s0, s1 = offa[u], offa[u + 1]
        k = s1 - s0
        xa = xa_all[s0:s1].reshape((k, d))
        Aa = Aa_all[aoffa[u]:aoffa[u + 1]].reshape((k, k))
        start = u + 1 if symmetric else 0
        for v in range(start, nb):
            t0, t1 = offb[v], offb[v + 1]
            l = t1 - t0
            xb = xb_all[t0:t1].reshape((l, d))
            Ab = Ab_all[aoffb[v]:aoffb[v + 1]].reshape((l, l))
            val, ex = _gospa_kernel(xa, Aa, xb, Ab, cv, ce, variant, endpoint, exact_limit)
            out[u, v] = val
            flag[u, v] = ex
            if symmetric:
                out[v, u] = val
                flag[v, u] = ex
    return out, flag


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _arrays(g: SpatialGraph, d: int):
    x = np.ascontiguousarray(g.points, dtype=np.float64).reshape(-1, d)
    A = np.ascontiguousarray(g.adjacency(), dtype=np.uint8)
    return x, A


def _dim(*graphs: SpatialGraph) -> int:
    dims = {g.dim for g in graphs if g.n_vertices}
    if len(dims) > 1:
        raise ValidationError("graphs live in different dimensions")
    return dims.pop() if dims else graphs[0].dim


def gospa_result(a: SpatialGraph, b: SpatialGraph, params: GospaParams) -> Tuple[float, bool]:
    """Metric value and whether it is the exact optimum (else an upper bound)."""
    d = _dim(a, b)
    xa, Aa = _arrays(a, d)
    xb, Ab = _arrays(b, d)
    val, ex = _gospa_kernel(xa, Aa, xb, Ab, float(params.C_V), float(params.C_E),
                            int(params.variant), params.edge_metric == "endpoint-aware",
                            int(params.exact_limit))
    return float(val), bool(ex)


def gospa(a: SpatialGraph, b: SpatialGraph, params: GospaParams) -> float:
    return gospa_result(a, b, params)[0]


def _pack(graphs: Sequence[SpatialGraph], d: int):
    xs, As = [], []
    off, aoff = [0], [0]
    for g in graphs:
        x, A = _arrays(g, d)
        xs.append(x)
        As.append(A.ravel())
        off.append(off[-1] + len(x))
        aoff.append(aoff[-1] + A.size)
    X = np.concatenate(xs) if xs else np.empty((0, d))
    Aflat = np.concatenate(As) if As else np.empty(0, np.uint8)
    return (np.ascontiguousarray(X.reshape(-1, d)), Aflat.astype(np.uint8),
            np.asarray(off, np.int64), np.asarray(aoff, np.int64))


def gospa_matrix(sample_a: Sequence[SpatialGraph], sample_b: Sequence[SpatialGraph] | None,
                 params: GospaParams) -> Tuple[np.ndarray, np.ndarray]:
    """Pairwise metric matrix and exactness flags.

    Passing ``sample_b=None`` computes the symmetric matrix of ``sample_a``.
    """
    symmetric = sample_b is None
    sb = sample_a if symmetric else sample_b
    allg = list(sample_a) + list(sb)
    if not allg:
        return np.zeros((0, 0)), np.ones((0, 0), bool)
    d = _dim(*allg)
    Xa, Aa, oa, aa = _pack(sample_a, d)
    Xb, Ab, ob, ab = _pack(sb, d)
    return _matrix_kernel(Xa, Aa, oa, Xb, Ab, ob, aa, ab, float(params.C_V),
                          float(params.C_E), int(params.variant),
                          params.edge_metric == "endpoint-aware",
                          int(params.exact_limit), symmetric)


def gospa_bruteforce(a: SpatialGraph, b: SpatialGraph, params: GospaParams) -> float:
    """Exhaustive evaluation over all padded permutations (sizes up to 7)."""
    if a.n_vertices > b.n_vertices:
        a, b = b, a
    n, m = a.n_vertices, b.n_vertices
    if m > ORACLE_MAX:
        raise ValidationError("oracle size cap")
    if m == 0:
        return 0.0
    cv, ce = float(params.C_V), float(params.C_E)
    xa, xb = a.points, b.points
    dist = np.sqrt(((xa[:, None, :] - xb[None, :, :]) ** 2).sum(-1)) if n else np.zeros((0, m))
    Dpad = np.full((m, m), cv)
    Dpad[:n] = np.minimum(dist, cv)
    Apad = np.zeros((m, m), int)
    Apad[:n, :n] = a.adjacency()
    B = b.adjacency().astype(int)
    perms = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    # perms[p, i] = vertex of b matched to padded slot i of a
    vert = Dpad[np.arange(m), perms].sum(axis=1)
    if m == 1:
        return float(vert.min())
    I, I2 = np.triu_indices(m, 1)
    J, J2 = perms[:, I], perms[:, I2]
    f = B[J, J2]
    e = Apad[I, I2][None, :]
    real = ((I < n) & (I2 < n))[None, :]
    if params.edge_metric == "endpoint-aware":
        dIJ = Dpad[I[None, :], J]
        dI2J2 = Dpad[I2[None, :], J2]
        dIJ2 = Dpad[I[None, :], J2]
        dI2J = Dpad[I2[None, :], J]
        both = np.minimum(ce, np.minimum(0.5 * (dIJ + dI2J2), 0.5 * (dIJ2 + dI2J)))
        de = np.where(e != f, ce, np.where(e == 1, both, 0.0))
    else:
        de = ce * (e != f)
    dummy = ce * (1 + f) if params.variant == 2 else np.full(f.shape, ce)
    pair = np.where(real, de, dummy).sum(axis=1)
    return float(np.min(vert + pair / (m - 1)) / m)


__all__ = ["GospaParams", "gospa", "gospa_result", "gospa_matrix", "gospa_bruteforce",
           "ORACLE_MAX"]
