"""Spatial graphs, edge kernels, RGG sampling and the graph GNZ check."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (NumericalError, QuadratureSpec, RngLike, ValidationError, Window,
                   as_generator, quadrature_nodes)
from .point_process import (GibbsModel, PointPattern, _pair_dist,
                            conditional_intensity_many, sample_vertices)

SCHEMA_VERSION = 1

Edge = Tuple[int, int]


def _norm_edges(edges: Iterable, n: int) -> FrozenSet[Edge]:
    out = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if i == j:
            raise ValidationError("self-loop in edge set")
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError("edge references a missing vertex")
        key = (i, j) if i < j else (j, i)
        if key in out:
            raise ValidationError("duplicate edge")
        out.add(key)
    return frozenset(out)


class SpatialGraph:
    """Vertex pattern plus undirected simple edge set over vertex indices."""

    __slots__ = ("vertices", "edges", "_adj")

    def __init__(self, vertices, edges: Iterable = (), window: Optional[Window] = None):
        if not isinstance(vertices, PointPattern):
            vertices = PointPattern(vertices, window)
        self.vertices = vertices
        self.edges = _norm_edges(edges, len(vertices))
        self._adj = None

    @classmethod
    def from_adjacency(cls, vertices, adj: np.ndarray, window: Optional[Window] = None):
        adj = np.asarray(adj, bool)
        i, j = np.nonzero(np.triu(adj, 1))
        g = cls(vertices, zip(i.tolist(), j.tolist()), window)
        return g

    @property
    def points(self) -> np.ndarray:
        return self.vertices.points

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def dim(self) -> int:
        return self.vertices.dim

    def adjacency(self) -> np.ndarray:
        if self._adj is None:
            n = self.n_vertices
            a = np.zeros((n, n), bool)
            if self.edges:
                e = np.array(sorted(self.edges))
                a[e[:, 0], e[:, 1]] = True
                a[e[:, 1], e[:, 0]] = True
            a.setflags(write=False)
            self._adj = a
        return self._adj

    def degree(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SpatialGraph) and self.vertices == other.vertices
                and self.edges == other.edges)

    def __repr__(self) -> str:
        return f"SpatialGraph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"

    def check(self) -> None:
        """Re-validate structural invariants (raises on violation)."""
        pts = self.points
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ValidationError("duplicate vertex")
        _norm_edges(self.edges, self.n_vertices)

    # -- serialisation ----------------------------------------------------------
    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "dim": self.dim,
                "vertices": [[float(v) for v in p] for p in self.points],
                "edges": [list(e) for e in sorted(self.edges)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict, window: Optional[Window] = None) -> "SpatialGraph":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError("unsupported graph schema_version")
        d = int(doc["dim"])
        pts = np.asarray(doc["vertices"], float).reshape(-1, d)
        return cls(PointPattern(pts, window, d=d), [tuple(e) for e in doc["edges"]])

    @classmethod
    def from_json(cls, text: str, window: Optional[Window] = None) -> "SpatialGraph":
        return cls.from_dict(json.loads(text), window)

    def to_csv_pair(self) -> Tuple[str, str]:
        head = "index," + ",".join(f"x{k + 1}" for k in range(self.dim))
        vrows = [f"{i}," + ",".join(repr(float(v)) for v in p)
                 for i, p in enumerate(self.points)]
        erows = [f"{i},{j}" for i, j in sorted(self.edges)]
        return ("\n".join([head] + vrows) + "\n", "\n".join(["i,j"] + erows) + "\n")

    @classmethod
    def from_csv_pair(cls, vertices_csv: str, edges_csv: str,
                      window: Optional[Window] = None) -> "SpatialGraph":
        vlines = [ln for ln in vertices_csv.strip().splitlines() if ln.strip()]
        d = len(vlines[0].split(",")) - 1
        rows = sorted(([float(v) for v in ln.split(",")] for ln in vlines[1:]),
                      key=lambda r: r[0])
        if [int(r[0]) for r in rows] != list(range(len(rows))):
            raise ValidationError("vertex indices must be 0..n-1")
        pts = np.asarray([r[1:] for r in rows], float).reshape(-1, d)
        elines = [ln for ln in edges_csv.strip().splitlines() if ln.strip()][1:]
        edges = [tuple(int(v) for v in ln.split(",")) for ln in elines]
        return cls(PointPattern(pts, window, d=d), edges)


def empty_graph(d: int = 2) -> SpatialGraph:
    return SpatialGraph(PointPattern(np.empty((0, d)), d=d))


def same_graph(a: SpatialGraph, b: SpatialGraph) -> bool:
    """Equality up to vertex relabelling, with exact coordinate matching."""
    if a.n_vertices != b.n_vertices or a.n_edges != b.n_edges:
        return False
    ka = [tuple(p) for p in a.points]
    kb = [tuple(p) for p in b.points]
    if set(ka) != set(kb):
        return False
    ea = {frozenset((ka[i], ka[j])) for i, j in a.edges}
    eb = {frozenset((kb[i], kb[j])) for i, j in b.edges}
    return ea == eb


# -- edge models ----------------------------------------------------------------

Kappa = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EdgeModel:
    """Product connection function ``kappa`` or latent-radius Boolean rule.

    ``kappa`` maps point arrays ``(N, d), (M, d)`` to an ``(N, M)`` matrix of
    probabilities.  For the Boolean kind, ``radius_sampler(rng, n)`` draws the
    effective radii and ``i ~ j`` iff ``|x_i - x_j| * scale <= r_i + r_j``.
    """

    kind: str = "product"
    kappa: Optional[Kappa] = None
    radius_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    scale: float = 1.0
    label: str = ""
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("product", "boolean-latent"):
            raise ValidationError(f"unknown edge model kind {self.kind!r}")
        if self.kind == "product" and self.kappa is None:
            raise ValidationError("product edge model needs kappa")
        if self.kind == "boolean-latent" and self.radius_sampler is None:
            raise ValidationError("boolean-latent edge model needs a radius sampler")

    @classmethod
    def constant(cls, p: float) -> "EdgeModel":
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise ValidationError("invalid connection probability")
        return cls("product", lambda X, Y: np.full((len(X), len(Y)), p),
                   label=f"constant({p})", lipschitz=0.0)

    @classmethod
    def threshold(cls, r: float, p: float = 1.0) -> "EdgeModel":
        r, p = float(r), float(p)
        if not 0.0 <= p <= 1.0:
            raise ValidationError("invalid connection probability")
        return cls("product", lambda X, Y: p * (_pair_dist(X, Y) <= r),
                   label=f"threshold(r={r}, p={p})")

    @classmethod
    def exponential(cls, p: float, scale: float) -> "EdgeModel":
        """``p * exp(-dist / scale)``; Lipschitz constant ``p / scale`` per argument."""
        p, s = float(p), float(scale)
        if not 0.0 <= p <= 1.0:
            raise ValidationError("invalid connection probability")
        return cls("product", lambda X, Y: p * np.exp(-_pair_dist(X, Y) / s),
                   label=f"exponential(p={p}, scale={s})", lipschitz=p / s)

    @classmethod
    def boolean(cls, radius_sampler, scale: float = 1.0) -> "EdgeModel":
        return cls("boolean-latent", radius_sampler=radius_sampler, scale=float(scale),
                   label="boolean")

    def probabilities(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        if self.kind != "product":
            raise ValidationError("influence condition not guaranteed")
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        if len(X) == 0 or len(Y) == 0:
            return np.zeros((len(X), len(Y)))
        k = np.asarray(self.kappa(X, Y), float)
        if k.shape != (len(X), len(Y)):
            k = np.broadcast_to(k, (len(X), len(Y))).astype(float)
        if not np.all(np.isfinite(k)) or np.any(k < 0.0) or np.any(k > 1.0):
            raise ValidationError("invalid connection probability")
        return k


def sample_edges(edge_model: EdgeModel, xi, rng: RngLike = None) -> FrozenSet[Edge]:
    """Edge set on ``xi``; pairs are independent Bernoulli(kappa)."""
    g = as_generator(rng)
    pts = xi.points if isinstance(xi, PointPattern) else np.asarray(xi, float)
    return frozenset(_adj_to_edges(sample_adjacency(edge_model, pts, g)))


def sample_adjacency(edge_model: EdgeModel, pts: np.ndarray,
                     g: np.random.Generator) -> np.ndarray:
    n = len(pts)
    if n < 2:
        return np.zeros((n, n), bool)
    if edge_model.kind == "boolean-latent":
        radii = np.asarray(edge_model.radius_sampler(g, n), float)
        dist = _pair_dist(pts, pts) * edge_model.scale
        adj = dist <= radii[:, None] + radii[None, :]
    else:
        k = edge_model.probabilities(pts, pts)
        iu = np.triu_indices(n, 1)
        u = g.random(len(iu[0]))
        adj = np.zeros((n, n), bool)
        adj[iu] = u < k[iu]
        adj |= adj.T
    np.fill_diagonal(adj, False)
    return adj


def _adj_to_edges(adj: np.ndarray) -> List[Edge]:
    i, j = np.nonzero(np.triu(adj, 1))
    return list(zip(i.tolist(), j.tolist()))


def sample_edges_to_new_vertex(edge_model: EdgeModel, xi, x,
                               rng: RngLike = None) -> FrozenSet[Edge]:
    """Edges between a new vertex ``x`` and ``xi``.

    Returned pairs are ``(j, n)`` where ``n = |xi|`` is the index ``x`` takes
    when appended to ``xi``.
    """
    g = as_generator(rng)
    pts = xi.points if isinstance(xi, PointPattern) else np.asarray(xi, float)
    x = np.asarray(x, float).reshape(1, -1)
    if len(pts) and np.any(np.all(pts == x, axis=1)):
        raise ValidationError("duplicate vertex")
    if len(pts) == 0:
        return frozenset()
    k = edge_model.probabilities(x, pts)[0]
    hit = np.nonzero(g.random(len(pts)) < k)[0]
    n = len(pts)
    return frozenset((int(j), n) for j in hit)


def sample_rgg(vertex_model: GibbsModel, edge_model: EdgeModel, rng: RngLike = None,
               n_jumps: Optional[int] = None) -> SpatialGraph:
    return sample_rgg_batch(vertex_model, edge_model, 1, rng, n_jumps)[0]


def sample_rgg_batch(vertex_model: GibbsModel, edge_model: EdgeModel, n: int,
                     rng: RngLike = None, n_jumps: Optional[int] = None) -> List[SpatialGraph]:
    g = as_generator(rng)
    pats = sample_vertices(vertex_model, n, g, n_jumps)
    out = []
    for p in pats:
        adj = sample_adjacency(edge_model, p.points, g)
        out.append(SpatialGraph(p, _adj_to_edges(adj)))
    return out


# -- graph GNZ --------------------------------------------------------------------

# Test functions: h(P (n,d), A (n,n) bool, X (N,d), S (N,n) bool) -> (N,) values,
# where row k of S marks the neighbours of the query point X[k] within P.
GraphTest = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GraphGnzReport:
    lhs_estimate: float
    rhs_estimate: float
    std_error: float
    n_samples: int

    @property
    def residual(self) -> float:
        return self.lhs_estimate - self.rhs_estimate

    def within(self, k: float = 3.0) -> bool:
        return abs(self.residual) <= k * self.std_error + 1e-12


def graph_gnz_test_suite(window: Window) -> dict:
    lo, hi = window.lo, window.hi
    mid = lo + 0.5 * (hi - lo)

    def within_edges(P, A, X, S):
        return np.full(len(X), min(3.0, A.sum() / 2.0))

    return {
        "zero": lambda P, A, X, S: np.zeros(len(X)),
        "one": lambda P, A, X, S: np.ones(len(X)),
        "degree": lambda P, A, X, S: S.sum(axis=1).astype(float),
        "degree-subwindow": lambda P, A, X, S: S.sum(axis=1) * np.all(X <= mid, axis=1),
        "capped-edges": within_edges,
        "isolated": lambda P, A, X, S: (S.sum(axis=1) == 0).astype(float),
    }


def _graph_gnz_sides(vm: GibbsModel, em: EdgeModel, hs: Sequence[GraphTest],
                     graph: SpatialGraph, spec: QuadratureSpec, g: np.random.Generator):
    P, A = graph.points, np.asarray(graph.adjacency())
    n = len(P)
    lhs = np.zeros(len(hs))
    for i in range(n):
        keep = np.arange(n) != i
        Pi, Ai, Si = P[keep], A[np.ix_(keep, keep)], A[i:i + 1, keep]
        for k, h in enumerate(hs):
            lhs[k] += float(h(Pi, Ai, P[i:i + 1], Si)[0])
    nodes, w = quadrature_nodes(vm.window, spec, g)
    lam = conditional_intensity_many(vm, nodes, P)
    if n:
        S = g.random((len(nodes), n)) < em.probabilities(nodes, P)
    else:
        S = np.zeros((len(nodes), 0), bool)
    rhs = np.empty(len(hs))
    for k, h in enumerate(hs):
        vals = np.asarray(h(P, A, nodes, S), float) * lam
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite integrand")
        rhs[k] = vals @ w
    return lhs, rhs


def graph_gnz_suite_residuals(vertex_model: GibbsModel, edge_model: EdgeModel,
                              suite: Dict[str, GraphTest], n_samples: int,
                              rng: RngLike = None, spec: Optional[QuadratureSpec] = None,
                              samples: Optional[List[SpatialGraph]] = None
                              ) -> Dict[str, GraphGnzReport]:
    """Both sides of the graph GNZ identity for an influence-free edge kernel.

    One edge-indicator draw per quadrature node and sample is shared by all
    test functions.
    """
    if edge_model.kind != "product":
        raise ValidationError("influence condition not guaranteed")
    g = as_generator(rng)
    spec = spec or QuadratureSpec(resolution=16, shift=True)
    graphs = samples if samples is not None else sample_rgg_batch(
        vertex_model, edge_model, n_samples, g)
    if len(graphs) < 2:
        raise ValidationError("n_samples must be at least 2")
    names = list(suite)
    hs = [suite[k] for k in names]
    lhs, rhs = np.empty((len(graphs), len(hs))), np.empty((len(graphs), len(hs)))
    for k, gr in enumerate(graphs):
        lhs[k], rhs[k] = _graph_gnz_sides(vertex_model, edge_model, hs, gr, spec, g)
    diff = lhs - rhs
    se = np.std(diff, axis=0, ddof=1) / np.sqrt(len(diff))
    return {name: GraphGnzReport(float(lhs[:, k].mean()), float(rhs[:, k].mean()),
                                 float(se[k]), len(diff)) for k, name in enumerate(names)}


def graph_gnz_residual(vertex_model: GibbsModel, edge_model: EdgeModel, h: GraphTest,
                       n_samples: int, rng: RngLike = None,
                       spec: Optional[QuadratureSpec] = None,
                       samples: Optional[List[SpatialGraph]] = None) -> GraphGnzReport:
    return graph_gnz_suite_residuals(vertex_model, edge_model, {"h": h}, n_samples, rng,
                                     spec, samples)["h"]


__all__ = [
    "SCHEMA_VERSION", "SpatialGraph", "EdgeModel", "GraphGnzReport", "empty_graph",
    "same_graph", "sample_edges", "sample_adjacency", "sample_edges_to_new_vertex",
    "sample_rgg", "sample_rgg_batch", "graph_gnz_residual", "graph_gnz_suite_residuals",
    "graph_gnz_test_suite",
]
