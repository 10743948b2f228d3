"""Discretisation grids, lattice Gibbs models and coupled continuous/lattice chains."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import RngLike, ValidationError, Window, as_generator
from .graph import EdgeModel, SpatialGraph
from .point_process import GibbsModel, PointPattern


@dataclass(frozen=True)
class DiscretisationGrid:
    """Partition of a window into axis-aligned boxes with representative centres."""

    window: Window
    lower: np.ndarray
    upper: np.ndarray
    centres: np.ndarray
    shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        lo, hi, c = (np.asarray(a, float) for a in (self.lower, self.upper, self.centres))
        d = self.window.dim
        if lo.ndim != 2 or lo.shape[1] != d or lo.shape != hi.shape or c.shape != lo.shape:
            raise ValidationError("grid/window mismatch")
        if np.any(hi <= lo):
            raise ValidationError("grid cells must have positive volume")
        wl, wh = self.window.lo, self.window.hi
        if np.any(lo < wl - 1e-12) or np.any(hi > wh + 1e-12):
            raise ValidationError("grid/window mismatch")
        if np.any(c < lo) or np.any(c > hi):
            raise ValidationError("cell centre outside its cell")
        vol = np.prod(hi - lo, axis=1).sum()
        if abs(vol - self.window.volume) > 1e-9 * self.window.volume:
            raise ValidationError("grid/window mismatch")
        if self.shape is None and len(lo) <= 4096:
            ov = np.all((lo[:, None, :] < hi[None, :, :]) & (lo[None, :, :] < hi[:, None, :]), axis=2)
            np.fill_diagonal(ov, False)
            if ov.any():
                raise ValidationError("grid cells overlap")
        for name, arr in (("lower", lo), ("upper", hi), ("centres", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def regular(cls, window: Window, k: int) -> "DiscretisationGrid":
        """``k`` cells per axis with centres at the cell midpoints."""
        if k < 1:
            raise ValidationError("grid needs at least one cell per axis")
        d = window.dim
        h = (window.hi - window.lo) / k
        idx = np.stack(np.meshgrid(*[np.arange(k)] * d, indexing="ij"), -1).reshape(-1, d)
        lo = window.lo + idx * h
        hi = np.where(idx == k - 1, window.hi, window.lo + (idx + 1) * h)
        return cls(window, lo, hi, 0.5 * (lo + hi), shape=(k,) * d)

    @property
    def n_cells(self) -> int:
        return len(self.lower)

    @property
    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    @property
    def r_v(self) -> float:
        """Largest distance from a centre to any point of its cell."""
        far = np.maximum(np.abs(self.upper - self.centres), np.abs(self.centres - self.lower))
        return float(np.max(np.sqrt((far ** 2).sum(axis=1))))

    def locate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.shape is not None:
            k = np.asarray(self.shape)
            h = (self.window.hi - self.window.lo) / k
            idx = np.clip(np.floor((X - self.window.lo) / h).astype(np.int64), 0, k - 1)
            return np.ravel_multi_index(tuple(idx.T), self.shape)
        inside = np.all((X[:, None, :] >= self.lower[None]) & (X[:, None, :] <= self.upper[None]), axis=2)
        if not np.all(inside.any(axis=1)):
            raise ValidationError("point outside window")
        return np.argmax(inside, axis=1)

    def t(self, X: np.ndarray) -> np.ndarray:
        """Map each point to the centre of its cell."""
        return self.centres[self.locate(X)]


@dataclass(frozen=True)
class LatticeGibbsModel:
    """Pairwise interaction on cell centres with reference weights ``Leb(cell)``."""

    grid: DiscretisationGrid
    beta: float
    source: GibbsModel

    def conditional_intensity(self, site: int, occupied: np.ndarray) -> float:
        if occupied.size and np.any(occupied == site):
            return 0.0
        if self.source.kind == "poisson" or occupied.size == 0:
            return self.beta
        y = self.grid.centres[site:site + 1]
        return self.beta * float(np.prod(self.source.phi_matrix(y, self.grid.centres[occupied])))


def _require_constant_beta(model: GibbsModel) -> float:
    if callable(model.beta):
        raise ValidationError("non-constant beta is not supported for discretisation")
    return float(model.beta)


def sample_lattice_gibbs(lm: LatticeGibbsModel, rng: RngLike = None,
                         horizon: Optional[float] = None) -> np.ndarray:
    """Occupied site indices after a dominated birth-death run (multi-occupancy rejected)."""
    g = as_generator(rng)
    B = lm.beta * lm.grid.window.volume
    if B <= 0:
        return np.empty(0, np.int64)
    T = 25.0 * math.ceil(B) / B if horizon is None else float(horizon)
    probs = lm.grid.volumes / lm.grid.volumes.sum()
    occ: List[int] = []
    t = 0.0
    while True:
        t += g.exponential() / (B + len(occ))
        if t > T:
            break
        if g.random() * (B + len(occ)) < B:
            site = int(g.choice(len(probs), p=probs))
            lam = lm.conditional_intensity(site, np.asarray(occ, np.int64))
            if g.random() * lm.beta < lam:
                occ.append(site)
        else:
            occ.pop(int(g.integers(len(occ))))
    return np.asarray(sorted(occ), np.int64)


class IntermediateSampler:
    """Cell-uniform resampling of lattice points with edges from ``kappa`` at centres."""

    def __init__(self, lattice_model: LatticeGibbsModel, edge_model: EdgeModel):
        self.lattice_model = lattice_model
        self.edge_model = edge_model

    def lattice_graph(self, sites: np.ndarray, g: np.random.Generator) -> SpatialGraph:
        c = self.lattice_model.grid.centres[sites]
        return _graph_with_shared_edges(c, self.edge_model, g.random((len(c), len(c))))

    def __call__(self, rng: RngLike = None, sites: Optional[np.ndarray] = None
                 ) -> SpatialGraph:
        g = as_generator(rng)
        grid = self.lattice_model.grid
        if sites is None:
            sites = sample_lattice_gibbs(self.lattice_model, g)
        lo, hi = grid.lower[sites], grid.upper[sites]
        pts = lo + (hi - lo) * g.random(lo.shape)
        U = g.random((len(sites), len(sites)))
        probs = self.edge_model.probabilities(grid.centres[sites], grid.centres[sites]) \
            if len(sites) else np.zeros((0, 0))
        return _graph_from_uniforms(pts, probs, U)


def discretise_model(model: GibbsModel, edge_model: EdgeModel, grid: DiscretisationGrid
                     ) -> Tuple[LatticeGibbsModel, IntermediateSampler]:
    beta = _require_constant_beta(model)
    if grid.window != model.window:
        raise ValidationError("grid/window mismatch")
    lm = LatticeGibbsModel(grid, beta, model)
    return lm, IntermediateSampler(lm, edge_model)


def _graph_from_uniforms(pts: np.ndarray, probs: np.ndarray, U: np.ndarray) -> SpatialGraph:
    n = len(pts)
    if n < 2:
        return SpatialGraph(PointPattern(pts, d=pts.shape[1]))
    adj = np.triu(U < probs, 1)
    return SpatialGraph.from_adjacency(pts, adj | adj.T)


def _graph_with_shared_edges(pts, edge_model, U):
    probs = edge_model.probabilities(pts, pts) if len(pts) else np.zeros((0, 0))
    return _graph_from_uniforms(pts, probs, U)


def coupled_continuous_lattice(model: GibbsModel, edge_model: EdgeModel,
                               grid: DiscretisationGrid, rng: RngLike = None,
                               horizon: Optional[float] = None
                               ) -> Tuple[SpatialGraph, SpatialGraph]:
    """Continuous RGG and lattice graph driven by the same random numbers.

    Both chains see the same birth proposals ``(x, U)`` and the same death
    clocks; the lattice chain proposes ``t(x)`` and rejects occupied sites.
    Edges of the final states share one uniform per vertex pair.  Each
    marginal is the usual dominated birth-death chain for its own model.
    """
    g = as_generator(rng)
    beta = _require_constant_beta(model)
    w = model.window
    d = w.dim
    B = beta * w.volume
    T = 25.0 * math.ceil(max(B, 1e-300)) / B if horizon is None else float(horizon)
    xs = np.zeros((0, d))
    in_c = np.zeros(0, bool)
    in_l = np.zeros(0, bool)
    cells = np.zeros(0, np.int64)
    t = 0.0
    while B > 0:
        n = len(xs)
        t += g.exponential() / (B + n)
        if t > T:
            break
        if g.random() * (B + n) < B:
            x = w.uniform(g, 1)
            u = g.random()
            cell = int(grid.locate(x)[0])
            cx = grid.centres[cell:cell + 1]
            lam_c = beta * np.prod(model.phi_matrix(x, xs[in_c])) if in_c.any() else beta
            if in_l.any():
                if np.any(cells[in_l] == cell):
                    lam_l = 0.0
                else:
                    lam_l = beta * np.prod(model.phi_matrix(cx, grid.centres[cells[in_l]]))
            else:
                lam_l = beta
            ac, al = u * beta < lam_c, u * beta < lam_l
            if ac or al:
                xs = np.vstack([xs, x])
                in_c = np.append(in_c, ac)
                in_l = np.append(in_l, al)
                cells = np.append(cells, cell)
        else:
            k = int(g.integers(n))
            keep = np.arange(n) != k
            xs, in_c, in_l, cells = xs[keep], in_c[keep], in_l[keep], cells[keep]
    U = g.random((len(xs), len(xs)))
    pc = xs[in_c]
    pl = grid.centres[cells[in_l]]
    Gc = _graph_from_uniforms(pc, edge_model.probabilities(pc, pc) if len(pc) else
                              np.zeros((0, 0)), U[np.ix_(in_c, in_c)])
    Gl = _graph_from_uniforms(pl, edge_model.probabilities(pl, pl) if len(pl) else
                              np.zeros((0, 0)), U[np.ix_(in_l, in_l)])
    return Gc, Gl


__all__ = ["DiscretisationGrid", "LatticeGibbsModel", "IntermediateSampler",
           "discretise_model", "sample_lattice_gibbs", "coupled_continuous_lattice"]
