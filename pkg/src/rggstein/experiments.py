"""Reproducible experiment harnesses writing deterministic CSV tables."""
from __future__ import annotations

import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .boolean import BooleanConfig, sample_boolean_pair
from .bounds import (boolean_bound, discretisation_bound, soft_rgg_bound)
from .core import RngStream, ValidationError, loglog_slope
from .gospa import GospaParams
from .graph import EdgeModel, SpatialGraph, sample_rgg_batch
from .lattice import DiscretisationGrid, coupled_continuous_lattice
from .point_process import GibbsModel, PointPattern
from .transport import empirical_wasserstein, null_calibration


# -- tables ------------------------------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class ResultsTable:
    columns: List[str]
    rows: List[dict]
    config: dict
    summary: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.config)

    def column(self, name: str) -> np.ndarray:
        return np.asarray([r[name] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.hash}\n")
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(r[c]) for c in self.columns) + "\n")
        return buf.getvalue()

    def write(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- Boolean percolation ----------------------------------------------------------------

BOOLEAN_COLUMNS = ["gamma", "r", "W_hat", "bound", "vertex_term", "edge_term", "null_band",
                   "bound_recomputed", "within", "mean_vertices", "mean_edges_boolean",
                   "mean_edges_target", "slope_bound", "slope_W_hat", "expected_slope"]


def run_boolean_experiment(cfg: BooleanConfig, params: GospaParams, seed: int,
                           null_reps: int = 50, workers: int = 1,
                           band_cache: Optional[dict] = None) -> ResultsTable:
    """Boolean graphs against their Poisson RGG limit over the cutoff sweep.

    Each Boolean graph is paired with the target graph on the same centres.
    The empirical distance of these paired samples is an upper-biased estimate
    of the distance between the laws.  The null band comes from independent
    target samples; its random stream depends only on the seed and the target
    law, so ``band_cache`` may be shared between runs (e.g. over ``gamma``).
    """
    root = RngStream(seed)
    n = cfg.n_samples
    bands = {} if band_cache is None else band_cache

    def point(i):
        r = cfg.r_list[i]
        g = root.child(i).generator()
        pairs = [sample_boolean_pair(cfg, r, g) for _ in range(n)]
        boo, tgt = [p[0] for p in pairs], [p[1] for p in pairs]
        w = empirical_wasserstein(boo, tgt, params).value
        rep = boolean_bound(cfg, r, params)
        return r, w, rep, boo, tgt

    results = _map(point, range(len(cfg.r_list)), workers)
    rows = []
    for r, w, rep, boo, tgt in results:
        # rounded so float noise across the sweep does not split the cache
        law = {"intensity": float(f"{cfg.intensity(r):.12g}"),
               "t": float(f"{cfg.target_radius(r):.12g}"), "window": cfg.window.to_dict()}
        key = config_hash({"law": law, "seed": seed, "n": n, "reps": null_reps,
                           "metric": params.to_dict()})
        if key not in bands:
            def sampler(k, g, r=r):
                return [sample_boolean_pair(cfg, r, g)[1] for _ in range(k)]

            stream = root.child(10_000 + int(config_hash(law)[:7], 16))
            bands[key] = null_calibration(sampler, n, null_reps, params, stream.generator())
        band = bands[key]
        rows.append({"gamma": cfg.gamma, "r": r, "W_hat": w, "bound": rep.total,
                     "vertex_term": rep.terms["vertex_term"], "edge_term": rep.terms["edge_term"],
                     "null_band": band, "bound_recomputed": rep.recompute(),
                     "within": w <= rep.total + band,
                     "mean_vertices": float(np.mean([g.n_vertices for g in boo])),
                     "mean_edges_boolean": float(np.mean([g.n_edges for g in boo])),
                     "mean_edges_target": float(np.mean([g.n_edges for g in tgt]))})
    rs = [row["r"] for row in rows]
    sb = loglog_slope(rs, [row["bound"] for row in rows]) if len(rows) > 1 else float("nan")
    ws = [row["W_hat"] for row in rows]
    sw = loglog_slope(rs, ws) if len(rows) > 1 and min(ws) > 0 else float("nan")
    for row in rows:
        row.update(slope_bound=sb, slope_W_hat=sw, expected_slope=-(1 - cfg.gamma))
    conf = {"experiment": "boolean", "seed": seed, "boolean": cfg.to_dict(),
            "metric": params.to_dict(), "null_reps": null_reps}
    return ResultsTable(BOOLEAN_COLUMNS, rows, conf, {"slope_bound": sb, "slope_W_hat": sw})


# -- discretisation ----------------------------------------------------------------------

DISCRETISATION_COLUMNS = ["cells_per_axis", "r_V", "W_hat", "general_bound",
                          "lipschitz_bound", "null_band", "within", "mean_vertices_continuous",
                          "mean_vertices_lattice", "slope_W_hat", "slope_lipschitz"]


def run_discretisation_experiment(model: GibbsModel, edge_model: EdgeModel,
                                  grid_sizes: Sequence[int], params: GospaParams, seed: int,
                                  n_samples: int = 300, null_reps: int = 50,
                                  lipschitz: Optional[Tuple[float, float]] = None,
                                  workers: int = 1) -> ResultsTable:
    """Continuous RGG against lattice graphs on regular grids of decreasing cell size.

    Sample ``j`` on every grid reuses stream ``j``, so the continuous chain is
    identical across grids and each lattice graph is coupled to it.
    """
    root = RngStream(seed)
    if lipschitz is None and model.lipschitz is not None and edge_model.lipschitz is not None:
        lipschitz = (model.lipschitz, edge_model.lipschitz)

    def point(k):
        grid = DiscretisationGrid.regular(model.window, int(k))
        pairs = [coupled_continuous_lattice(model, edge_model, grid, root.child(j).generator())
                 for j in range(n_samples)]
        cont, latt = [p[0] for p in pairs], [p[1] for p in pairs]
        w = empirical_wasserstein(cont, latt, params).value
        b = discretisation_bound(model, edge_model, grid, params, lipschitz)
        return k, grid, w, b, cont, latt

    results = _map(point, list(grid_sizes), workers)

    def sampler(k, g):
        return sample_rgg_batch(model, edge_model, k, g)

    band = null_calibration(sampler, n_samples, null_reps, params,
                            root.child(10_000_000).generator())
    rows = []
    for k, grid, w, b, cont, latt in results:
        lip = b.lipschitz.total if b.lipschitz is not None else float("nan")
        ref = lip if b.lipschitz is not None else b.general.total
        rows.append({"cells_per_axis": int(k), "r_V": grid.r_v, "W_hat": w,
                     "general_bound": b.general.total, "lipschitz_bound": lip,
                     "null_band": band, "within": w <= ref + band,
                     "mean_vertices_continuous": float(np.mean([g.n_vertices for g in cont])),
                     "mean_vertices_lattice": float(np.mean([g.n_vertices for g in latt]))})
    rv = [r["r_V"] for r in rows]
    ws = [r["W_hat"] for r in rows]
    sw = loglog_slope(rv, ws) if len(rows) > 1 and min(ws) > 0 else float("nan")
    sl = loglog_slope(rv, [r["lipschitz_bound"] for r in rows]) \
        if len(rows) > 1 and lipschitz is not None else float("nan")
    for r in rows:
        r.update(slope_W_hat=sw, slope_lipschitz=sl)
    conf = {"experiment": "discretisation", "seed": seed, "model": model.describe(),
            "edge_model": edge_model.label, "grid_sizes": list(map(int, grid_sizes)),
            "metric": params.to_dict(), "n_samples": n_samples, "null_reps": null_reps,
            "lipschitz": list(lipschitz) if lipschitz else None}
    return ResultsTable(DISCRETISATION_COLUMNS, rows, conf, {"slope_W_hat": sw,
                                                            "slope_lipschitz": sl})


# -- soft RGG --------------------------------------------------------------------------------

def sample_soft_rgg_pair(m1: GibbsModel, m2: GibbsModel, k1: EdgeModel, k2: EdgeModel,
                         g: np.random.Generator) -> Tuple[SpatialGraph, SpatialGraph]:
    """Two Poisson RGGs built by thinning a common envelope with shared uniforms."""
    if m1.kind != "poisson" or m2.kind != "poisson":
        raise ValidationError("soft-RGG comparison needs Poisson intensities")
    w = m1.window
    lmax = max(m1.beta_sup, m2.beta_sup)
    n = int(g.poisson(lmax * w.volume))
    x = w.uniform(g, n)
    u = g.random(n) * lmax
    keep1, keep2 = u < m1.beta_at(x), u < m2.beta_at(x)
    V = g.random((n, n))

    def build(keep, em):
        pts = x[keep]
        if len(pts) < 2:
            return SpatialGraph(PointPattern(pts, d=w.dim, check=False))
        adj = np.triu(V[np.ix_(keep, keep)] < em.probabilities(pts, pts), 1)
        return SpatialGraph.from_adjacency(PointPattern(pts, d=w.dim, check=False), adj | adj.T)

    return build(keep1, k1), build(keep2, k2)


def bounded_functionals(window, scale: float) -> Dict[str, Callable[[SpatialGraph], float]]:
    """Twenty graph functionals with values in [0, 1]."""
    lo, hi = window.lo, window.hi
    out: Dict[str, Callable[[SpatialGraph], float]] = {}
    s = max(scale, 1.0)
    for c in (0.5, 1.0, 1.5):
        out[f"vertices<={c:g}L"] = lambda G, c=c: float(G.n_vertices <= c * s)
        out[f"edges<={c:g}L"] = lambda G, c=c: float(G.n_edges <= c * s)
    out["tanh-vertices"] = lambda G: math.tanh(G.n_vertices / s)
    out["tanh-edges"] = lambda G: math.tanh(G.n_edges / s)
    out["isolated-fraction"] = lambda G: float((G.degree() == 0).mean()) if G.n_vertices else 0.0
    out["mean-degree-ratio"] = lambda G: (lambda m: m / (1 + m))(
        float(G.degree().mean()) if G.n_vertices else 0.0)
    out["max-degree<=2"] = lambda G: float(G.degree().max() <= 2) if G.n_vertices else 1.0
    out["has-triangle"] = lambda G: float(_has_triangle(G))
    out["connected-pair-fraction"] = lambda G: (2.0 * G.n_edges / (G.n_vertices * (G.n_vertices - 1))
                                                if G.n_vertices > 1 else 0.0)
    for k in range(2):
        a = lo + 0.5 * k * (hi - lo)
        b = a + 0.5 * (hi - lo)
        out[f"sub{k}-nonempty"] = lambda G, a=a, b=b: float(
            np.any(np.all((G.points >= a) & (G.points <= b), axis=1))) if G.n_vertices else 0.0
        out[f"sub{k}-fraction"] = lambda G, a=a, b=b: float(
            np.all((G.points >= a) & (G.points <= b), axis=1).mean()) if G.n_vertices else 0.0
    out["empty-edges"] = lambda G: float(G.n_edges == 0)
    out["empty-graph"] = lambda G: float(G.n_vertices == 0)
    out["degree-variance-ratio"] = lambda G: (lambda v: v / (1 + v))(
        float(G.degree().var()) if G.n_vertices else 0.0)
    assert len(out) == 20
    return out


def _has_triangle(G: SpatialGraph) -> bool:
    A = G.adjacency().astype(np.int64)
    return bool(np.trace(A @ A @ A) > 0) if G.n_vertices >= 3 else False


SOFT_COLUMNS = ["lambda1", "lambda2", "kappa1", "kappa2", "W_hat", "bound", "vertex_term",
                "edge_term", "null_band", "within", "sup_bound", "max_gap_excess", "sup_within"]


def run_soft_rgg_experiment(lambda2: float, kappa2: float, lambda_steps: Sequence[float],
                            kappa_steps: Sequence[float], params: GospaParams, seed: int,
                            n_samples: int = 300, null_reps: int = 50, window=None,
                            workers: int = 1) -> ResultsTable:
    """Grid of perturbed Poisson soft RGGs ``(lambda2 + dl, kappa2 - dk)`` against the target.

    ``max_gap_excess`` is the largest value over the 20 functionals of
    ``|mean f(G1) - mean f(G2)| - 3 se`` (paired), to be compared with the
    sup-norm bound.
    """
    from .core import Window
    window = window or Window.unit(2)
    root = RngStream(seed)
    target = GibbsModel.poisson(window, float(lambda2))
    k2 = EdgeModel.constant(kappa2)
    funcs = bounded_functionals(window, lambda2 * window.volume)
    grid = [(float(lambda2 + dl), float(kappa2 - dk)) for dl in lambda_steps for dk in kappa_steps]

    def point(i):
        l1, kap1 = grid[i]
        m1, k1 = GibbsModel.poisson(window, l1), EdgeModel.constant(kap1)
        g = root.child(i).generator()
        pairs = [sample_soft_rgg_pair(m1, target, k1, k2, g) for _ in range(n_samples)]
        a, b = [p[0] for p in pairs], [p[1] for p in pairs]
        w = empirical_wasserstein(a, b, params).value
        wb = soft_rgg_bound(l1, lambda2, kap1, kappa2, window, params, "wasserstein")
        sb = soft_rgg_bound(l1, lambda2, kap1, kappa2, window, params, "sup-norm")
        excess = -math.inf
        for f in funcs.values():
            diff = np.array([f(x) - f(y) for x, y in zip(a, b)])
            se = float(np.std(diff, ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else 0.0
            excess = max(excess, abs(float(diff.mean())) - 3.0 * se)
        return l1, kap1, w, wb, sb, excess

    results = _map(point, range(len(grid)), workers)

    def sampler(k, g):
        return sample_rgg_batch(target, k2, k, g)

    band = null_calibration(sampler, n_samples, null_reps, params,
                            root.child(10_000_000).generator())
    rows = []
    for l1, kap1, w, wb, sb, excess in results:
        rows.append({"lambda1": l1, "lambda2": float(lambda2), "kappa1": kap1,
                     "kappa2": float(kappa2), "W_hat": w, "bound": wb.total,
                     "vertex_term": wb.terms["vertex_term"], "edge_term": wb.terms["edge_term"],
                     "null_band": band, "within": w <= wb.total + band, "sup_bound": sb.total,
                     "max_gap_excess": excess, "sup_within": excess <= sb.total})
    conf = {"experiment": "soft-rgg", "seed": seed, "lambda2": lambda2, "kappa2": kappa2,
            "lambda_steps": list(lambda_steps), "kappa_steps": list(kappa_steps),
            "window": window.to_dict(), "metric": params.to_dict(), "n_samples": n_samples,
            "null_reps": null_reps}
    return ResultsTable(SOFT_COLUMNS, rows, conf)


# -- Glauber dynamics -------------------------------------------------------------------------

def simulate_glauber_coupling(n: int, m: int, reps: int, seed: int) -> np.ndarray:
    """Coupling times of two Glauber chains on ``{0,1}^n`` that differ in ``m`` coordinates.

    At each step both chains refresh the same uniformly chosen coordinate
    with the same uniform bit.
    """
    if not 1 <= m <= n:
        raise ValidationError("need 1 <= m <= n")
    g = RngStream(seed).generator()
    X = g.integers(0, 2, (reps, n), dtype=np.int8)
    Y = X.copy()
    Y[:, :m] ^= 1
    tau = np.zeros(reps, np.int64)
    live = np.arange(reps)
    step = 0
    while live.size:
        step += 1
        idx = g.integers(0, n, live.size)
        bit = g.integers(0, 2, live.size, dtype=np.int8)
        X[live, idx] = bit
        Y[live, idx] = bit
        done = np.all(X[live] == Y[live], axis=1)
        tau[live[done]] = step
        live = live[~done]
    return tau


__all__ = [
    "ResultsTable", "config_hash", "BooleanConfig", "run_boolean_experiment",
    "run_discretisation_experiment", "sample_soft_rgg_pair", "bounded_functionals",
    "run_soft_rgg_experiment", "simulate_glauber_coupling",
]
