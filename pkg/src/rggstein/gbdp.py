"""Graph birth-and-death processes, their coupling and generator checks."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .core import NumericalError, QuadratureSpec, RngLike, ValidationError, as_generator, \
    quadrature_nodes
from .graph import EdgeModel, SpatialGraph
from .point_process import (GibbsModel, PointPattern, _sample_from_beta,
                            conditional_intensity_many)

# Graph functionals act on (points (n, d), adjacency (n, n) bool) and return a float.
GraphFunctional = Callable[[np.ndarray, np.ndarray], float]


def _require_product(edge_model: EdgeModel):
    if edge_model.kind != "product":
        raise ValidationError("influence condition not guaranteed")


def jump_rate(vertex_model: GibbsModel, xi, spec: Optional[QuadratureSpec] = None) -> float:
    """Total jump rate: integrated conditional intensity plus the number of points.

    A zero return means the state is absorbing.
    """
    pts = xi.points if isinstance(xi, PointPattern) else np.asarray(xi, float)
    pts = pts.reshape(-1, vertex_model.window.dim)
    if vertex_model.kind == "poisson" and not callable(vertex_model.beta):
        birth = vertex_model.total_beta()
    else:
        nodes, w = quadrature_nodes(vertex_model.window, spec or QuadratureSpec())
        vals = conditional_intensity_many(vertex_model, nodes, pts)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite integrand")
        birth = float(vals @ w)
    return birth + len(pts)


class _GraphState:
    """Mutable graph keyed by integer vertex ids (insertion order is kept)."""

    def __init__(self, graph: SpatialGraph):
        self.d = graph.dim
        self.pos: Dict[int, np.ndarray] = {}
        self.nbr: Dict[int, set] = {}
        self.next_id = 0
        for p in graph.points:
            self.add(np.array(p, float))
        for i, j in graph.edges:
            self.nbr[i].add(j)
            self.nbr[j].add(i)
        self.n_edges = graph.n_edges

    def add(self, x) -> int:
        k = self.next_id
        self.next_id += 1
        self.pos[k] = x
        self.nbr[k] = set()
        return k

    def remove(self, k: int):
        for j in self.nbr.pop(k):
            self.nbr[j].discard(k)
            self.n_edges -= 1
        del self.pos[k]

    def connect(self, i: int, j: int):
        self.nbr[i].add(j)
        self.nbr[j].add(i)
        self.n_edges += 1

    def points(self) -> np.ndarray:
        return np.array(list(self.pos.values()), float).reshape(-1, self.d)

    def to_graph(self, window=None) -> SpatialGraph:
        ids = list(self.pos)
        index = {k: i for i, k in enumerate(ids)}
        edges = [(index[i], index[j]) for i in ids for j in self.nbr[i] if index[i] < index[j]]
        return SpatialGraph(PointPattern(self.points(), window, d=self.d, check=False), edges)


@dataclass
class Trajectory:
    times: np.ndarray
    n_vertices: np.ndarray
    n_edges: np.ndarray
    final: SpatialGraph
    absorbed: bool = False
    snapshots: Dict[float, SpatialGraph] = field(default_factory=dict)

    def to_csv(self, graph_id: int = 0) -> str:
        buf = io.StringIO()
        buf.write("time,graph_id,n_vertices,n_edges,coupled_flag\n")
        for t, v, e in zip(self.times, self.n_vertices, self.n_edges):
            buf.write(f"{float(t)!r},{graph_id},{v},{e},0\n")
        return buf.getvalue()


def _birth_proposal(vm: GibbsModel, g: np.random.Generator):
    x = _sample_from_beta(vm, g, 1)
    return x, float(vm.beta_at(x)[0])


def _accept_ratio(vm: GibbsModel, x: np.ndarray, bx: float, pts: np.ndarray) -> float:
    if vm.kind == "poisson" or len(pts) == 0:
        return 1.0
    lam = float(conditional_intensity_many(vm, x, pts)[0])
    ratio = lam / bx if bx > 0 else 0.0
    if ratio > 1.0 + 1e-12:
        raise NumericalError("envelope violated")
    return ratio


def run_gbdp(vertex_model: GibbsModel, edge_model: EdgeModel, start: SpatialGraph,
             horizon: float, rng: RngLike = None, record_times: Sequence[float] = (),
             spec: Optional[QuadratureSpec] = None) -> Trajectory:
    """Simulate the graph birth-and-death process up to ``horizon``.

    Births are proposed at the envelope rate ``int beta`` and thinned by
    ``lambda(x|xi) / beta(x)``; each vertex dies at rate one.
    """
    if not horizon >= 0:
        raise ValidationError("horizon must be nonnegative")
    _require_product(edge_model)
    g = as_generator(rng)
    vm = vertex_model
    B = vm.total_beta(spec)
    st = _GraphState(start)
    rec = sorted(float(t) for t in record_times)
    snaps: Dict[float, SpatialGraph] = {}
    times, nv, ne = [0.0], [len(st.pos)], [st.n_edges]
    t, absorbed = 0.0, False
    ri = 0
    while True:
        n = len(st.pos)
        rate = B + n
        if rate <= 0:
            absorbed = True
            break
        t_next = t + g.exponential() / rate
        while ri < len(rec) and rec[ri] < min(t_next, horizon + 1e-300):
            snaps[rec[ri]] = st.to_graph()
            ri += 1
        if t_next > horizon:
            break
        t = t_next
        if g.random() * rate < B:
            x, bx = _birth_proposal(vm, g)
            pts = st.points()
            if g.random() < _accept_ratio(vm, x, bx, pts):
                ids = list(st.pos)
                k = st.add(x[0])
                if ids:
                    probs = edge_model.probabilities(x, pts)[0]
                    hit = g.random(len(ids)) < probs
                    for j in np.nonzero(hit)[0]:
                        st.connect(ids[j], k)
            else:
                continue
        else:
            ids = list(st.pos)
            st.remove(ids[int(g.integers(n))])
        times.append(t)
        nv.append(len(st.pos))
        ne.append(st.n_edges)
    while ri < len(rec):
        snaps[rec[ri]] = st.to_graph()
        ri += 1
    return Trajectory(np.asarray(times), np.asarray(nv), np.asarray(ne), st.to_graph(),
                      absorbed, snaps)


# -- coupling -------------------------------------------------------------------------

@dataclass
class CoupledTrajectory:
    times: np.ndarray
    n_vertices_a: np.ndarray
    n_edges_a: np.ndarray
    n_vertices_b: np.ndarray
    n_edges_b: np.ndarray
    coupled: np.ndarray
    coupling_time: Optional[float]
    final_a: SpatialGraph
    final_b: SpatialGraph
    horizon: float
    snapshots: Dict[float, Tuple[SpatialGraph, SpatialGraph]] = field(default_factory=dict)

    @property
    def is_coupled(self) -> bool:
        return self.coupling_time is not None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,graph_id,n_vertices,n_edges,coupled_flag\n")
        for k, t in enumerate(self.times):
            c = int(self.coupled[k])
            buf.write(f"{float(t)!r},0,{self.n_vertices_a[k]},{self.n_edges_a[k]},{c}\n")
            buf.write(f"{float(t)!r},1,{self.n_vertices_b[k]},{self.n_edges_b[k]},{c}\n")
        return buf.getvalue()


class _CoupledState:
    def __init__(self, a: SpatialGraph, b: SpatialGraph):
        self.d = a.dim if a.n_vertices else b.dim
        self.pos: Dict[int, np.ndarray] = {}
        self.in_a: Dict[int, bool] = {}
        self.in_b: Dict[int, bool] = {}
        self.ea: set = set()
        self.eb: set = set()
        key_to_id: Dict[tuple, int] = {}
        self.next_id = 0
        ida, idb = [], []
        for p in a.points:
            k = self._new(np.array(p, float))
            key_to_id[tuple(p)] = k
            self.in_a[k] = True
            ida.append(k)
        for p in b.points:
            k = key_to_id.get(tuple(p))
            if k is None:
                k = self._new(np.array(p, float))
            self.in_b[k] = True
            idb.append(k)
        for i, j in a.edges:
            self.ea.add(_pair(ida[i], ida[j]))
        for i, j in b.edges:
            self.eb.add(_pair(idb[i], idb[j]))
        self.n_single = sum(1 for k in self.pos if self.in_a[k] != self.in_b[k])

    def _new(self, x) -> int:
        k = self.next_id
        self.next_id += 1
        self.pos[k] = x
        self.in_a[k] = False
        self.in_b[k] = False
        return k

    def equal(self) -> bool:
        return self.n_single == 0 and self.ea == self.eb

    def points(self, side: str) -> Tuple[List[int], np.ndarray]:
        mem = self.in_a if side == "a" else self.in_b
        ids = [k for k in self.pos if mem[k]]
        return ids, np.array([self.pos[k] for k in ids], float).reshape(-1, self.d)

    def remove(self, k: int):
        if self.in_a[k] != self.in_b[k]:
            self.n_single -= 1
        for es in (self.ea, self.eb):
            dead = [e for e in es if k in e]
            for e in dead:
                es.discard(e)
        del self.pos[k], self.in_a[k], self.in_b[k]

    def graph(self, side: str) -> SpatialGraph:
        ids, pts = self.points(side)
        index = {k: i for i, k in enumerate(ids)}
        es = self.ea if side == "a" else self.eb
        return SpatialGraph(PointPattern(pts, d=self.d, check=False),
                            [(index[i], index[j]) for i, j in es])

    def counts(self):
        na = sum(self.in_a.values())
        nb = sum(self.in_b.values())
        return na, len(self.ea), nb, len(self.eb)


def _pair(i: int, j: int) -> Tuple[int, int]:
    return (i, j) if i < j else (j, i)


def run_coupled_gbdp(vertex_model: GibbsModel, edge_model: EdgeModel,
                     start_a: SpatialGraph, start_b: SpatialGraph, horizon: float,
                     rng: RngLike = None, record_times: Sequence[float] = (),
                     stop_at_coupling: bool = False,
                     spec: Optional[QuadratureSpec] = None) -> CoupledTrajectory:
    """Simulate two GBDPs with shared births, shared edge marks and shared deaths.

    A birth proposal ``Y`` with uniform ``U`` is kept by a copy iff
    ``U * beta(Y) < lambda(Y | copy)``, which maximally couples the two birth
    indicators.  The edge between ``Y`` and an existing vertex ``x`` uses one
    uniform for both copies.  Deaths pick a vertex uniformly from the union.
    """
    if not horizon >= 0:
        raise ValidationError("horizon must be nonnegative")
    _require_product(edge_model)
    g = as_generator(rng)
    vm = vertex_model
    B = vm.total_beta(spec)
    st = _CoupledState(start_a, start_b)
    rec = sorted(float(t) for t in record_times)
    snaps = {}
    t = 0.0
    is_eq = st.equal()
    tau = 0.0 if is_eq else None
    c0 = st.counts()
    times, na, ea, nb, eb, cf = [0.0], [c0[0]], [c0[1]], [c0[2]], [c0[3]], [is_eq]
    ri = 0
    while not (stop_at_coupling and tau is not None):
        n = len(st.pos)
        rate = B + n
        if rate <= 0:
            break
        t_next = t + g.exponential() / rate
        while ri < len(rec) and rec[ri] < min(t_next, horizon + 1e-300):
            snaps[rec[ri]] = (st.graph("a"), st.graph("b"))
            ri += 1
        if t_next > horizon:
            break
        t = t_next
        if g.random() * rate < B:
            y, by = _birth_proposal(vm, g)
            u = g.random()
            ids_a, pa = st.points("a")
            ids_b, pb = st.points("b")
            acc_a = u < _accept_ratio(vm, y, by, pa)
            acc_b = u < _accept_ratio(vm, y, by, pb)
            if not (acc_a or acc_b):
                continue
            union = list(st.pos)
            marks = {}
            if union:
                upts = np.array([st.pos[k] for k in union])
                probs = edge_model.probabilities(y, upts)[0]
                hit = g.random(len(union)) < probs
                marks = {union[j]: bool(hit[j]) for j in range(len(union))}
            k = st._new(y[0])
            st.in_a[k], st.in_b[k] = bool(acc_a), bool(acc_b)
            if acc_a != acc_b:
                st.n_single += 1
            if acc_a:
                for j in ids_a:
                    if marks.get(j):
                        st.ea.add(_pair(j, k))
            if acc_b:
                for j in ids_b:
                    if marks.get(j):
                        st.eb.add(_pair(j, k))
        else:
            union = list(st.pos)
            st.remove(union[int(g.integers(n))])
        is_eq = st.equal()
        if is_eq and tau is None:
            tau = t
        c = st.counts()
        times.append(t)
        na.append(c[0]); ea.append(c[1]); nb.append(c[2]); eb.append(c[3]); cf.append(is_eq)
    while ri < len(rec):
        snaps[rec[ri]] = (st.graph("a"), st.graph("b"))
        ri += 1
    return CoupledTrajectory(np.asarray(times), np.asarray(na), np.asarray(ea), np.asarray(nb),
                             np.asarray(eb), np.asarray(cf, bool), tau, st.graph("a"),
                             st.graph("b"), float(horizon), snaps)


def coupling_times(vertex_model: GibbsModel, edge_model: EdgeModel, start_a: SpatialGraph,
                   start_b: SpatialGraph, n_reps: int, horizon: float,
                   rng: RngLike = None) -> Tuple[np.ndarray, int]:
    """Coupling times of independent replications; censored paths get ``horizon``.

    Returns the times and the number of censored (uncoupled) paths.
    """
    g = as_generator(rng)
    out = np.empty(n_reps)
    censored = 0
    for k in range(n_reps):
        tr = run_coupled_gbdp(vertex_model, edge_model, start_a, start_b, horizon, g,
                              stop_at_coupling=True)
        if tr.coupling_time is None:
            censored += 1
            out[k] = horizon
        else:
            out[k] = tr.coupling_time
    return out, censored


# -- graph difference and generator ------------------------------------------------------

def graph_difference(a: SpatialGraph, b: SpatialGraph) -> int:
    """Vertices in exactly one graph plus common vertices whose common-edge rows differ."""
    ka = [tuple(p) for p in a.points]
    kb = [tuple(p) for p in b.points]
    sa, sb = set(ka), set(kb)
    common = sa & sb
    only = len(sa - sb) + len(sb - sa)

    def rows(keys, g):
        r = {k: set() for k in keys if k in common}
        for i, j in g.edges:
            u, v = keys[i], keys[j]
            if u in common and v in common:
                r[u].add(v)
                r[v].add(u)
        return r

    ra, rb = rows(ka, a), rows(kb, b)
    return only + sum(1 for k in common if ra[k] != rb[k])


def generator_apply(vertex_model: GibbsModel, edge_model: EdgeModel, h: GraphFunctional,
                    graph: SpatialGraph, spec: Optional[QuadratureSpec] = None,
                    rng: RngLike = None, n_inner: int = 1) -> float:
    """Estimate the generator applied to ``h`` at ``graph``.

    The birth integral uses the quadrature rule of ``spec``; with a random
    rule (shifted grid or monte-carlo) the estimate is unbiased.
    """
    _require_product(edge_model)
    g = as_generator(rng)
    spec = spec or QuadratureSpec(resolution=8, shift=True)
    P = graph.points
    A = np.asarray(graph.adjacency())
    n = len(P)
    h0 = float(h(P, A))
    nodes, w = quadrature_nodes(vertex_model.window, spec, g)
    lam = conditional_intensity_many(vertex_model, nodes, P)
    probs = edge_model.probabilities(nodes, P) if n else np.zeros((len(nodes), 0))
    birth = 0.0
    A2 = np.zeros((n + 1, n + 1), bool)
    A2[:n, :n] = A
    for q in range(len(nodes)):
        if lam[q] == 0.0:
            continue
        P2 = np.vstack([P, nodes[q:q + 1]])
        acc = 0.0
        for _ in range(n_inner):
            s = g.random(n) < probs[q]
            A2[n, :n] = s
            A2[:n, n] = s
            acc += float(h(P2, A2)) - h0
        birth += w[q] * lam[q] * acc / n_inner
    death = 0.0
    for i in range(n):
        keep = np.arange(n) != i
        death += float(h(P[keep], A[np.ix_(keep, keep)])) - h0
    return birth + death


def stationarity_functionals(window) -> Dict[str, GraphFunctional]:
    lo, hi = window.lo, window.hi
    mid = lo + 0.5 * (hi - lo)
    return {
        "vertices": lambda P, A: float(len(P)),
        "edges": lambda P, A: float(A.sum() / 2),
        "few-vertices": lambda P, A: float(len(P) <= 3),
        "subwindow-vertices": lambda P, A: float(np.all(P <= mid, axis=1).sum()) if len(P) else 0.0,
        "isolated": lambda P, A: float((A.sum(axis=1) == 0).sum()) if len(P) else 0.0,
    }


# -- marginal comparison --------------------------------------------------------------------

@dataclass(frozen=True)
class MarginalReport:
    statistics: Dict[str, Tuple[float, float]]

    @property
    def min_p(self) -> float:
        return min(p for _, p in self.statistics.values()) if self.statistics else 1.0


def marginal_check(coupled: Dict[str, np.ndarray], direct: Dict[str, np.ndarray]) -> MarginalReport:
    """Two-sample KS tests for each named statistic (e.g. counts at fixed times)."""
    out = {}
    for name in coupled:
        a, b = np.asarray(coupled[name]), np.asarray(direct[name])
        if np.array_equal(np.unique(a), np.unique(b)) and len(np.unique(a)) == 1:
            out[name] = (0.0, 1.0)
            continue
        res = stats.ks_2samp(a, b)
        out[name] = (float(res.statistic), float(res.pvalue))
    return MarginalReport(out)


def sample_marginals(vertex_model: GibbsModel, edge_model: EdgeModel, start_a: SpatialGraph,
                     start_b: SpatialGraph, times: Sequence[float], n_paths: int,
                     rng: RngLike = None) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Vertex and edge counts of copy A of the coupled process and of a direct run."""
    g = as_generator(rng)
    times = list(times)
    horizon = max(times)
    cpl = {f"{kind}@{t}": np.empty(n_paths) for t in times for kind in ("vertices", "edges")}
    drc = {k: np.empty(n_paths) for k in cpl}
    for p in range(n_paths):
        tr = run_coupled_gbdp(vertex_model, edge_model, start_a, start_b, horizon, g,
                              record_times=times)
        dr = run_gbdp(vertex_model, edge_model, start_a, horizon, g, record_times=times)
        for t in times:
            ga, _ = tr.snapshots[t]
            gd = dr.snapshots[t]
            cpl[f"vertices@{t}"][p] = ga.n_vertices
            cpl[f"edges@{t}"][p] = ga.n_edges
            drc[f"vertices@{t}"][p] = gd.n_vertices
            drc[f"edges@{t}"][p] = gd.n_edges
    return cpl, drc


__all__ = [
    "jump_rate", "Trajectory", "run_gbdp", "CoupledTrajectory", "run_coupled_gbdp",
    "coupling_times", "graph_difference", "generator_apply", "stationarity_functionals",
    "MarginalReport", "marginal_check", "sample_marginals",
]
