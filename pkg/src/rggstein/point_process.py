"""Gibbs point-process models, samplers and GNZ residual checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .core import (NumericalError, QuadratureSpec, RngLike, ValidationError,
                   Window, as_generator, as_points, quadrature_nodes)


class UnsupportedModelError(ValidationError):
    pass


class PointPattern:
    """Finite simple point configuration in a window (read-only array)."""

    __slots__ = ("_points", "window")

    def __init__(self, points, window: Optional[Window] = None, d: Optional[int] = None,
                 check: bool = True):
        if window is not None:
            dim = window.dim
        elif d is not None:
            dim = d
        else:
            shape = np.shape(points)
            dim = shape[-1] if len(shape) == 2 else 2
        arr = np.array(as_points(points, dim), dtype=float, copy=True)
        if check:
            if len(arr) > 1 and len(np.unique(arr, axis=0)) != len(arr):
                raise ValidationError("point pattern contains duplicate points")
            if window is not None and len(arr) and not np.all(window.contains(arr)):
                raise ValidationError("point outside window")
        arr.setflags(write=False)
        self._points = arr
        self.window = window

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return len(self._points)

    def __iter__(self):
        return iter(self._points)

    def __eq__(self, other) -> bool:
        return isinstance(other, PointPattern) and np.array_equal(self._points, other._points)

    def __repr__(self) -> str:
        return f"PointPattern(n={len(self)}, d={self.dim})"

    def add(self, x) -> "PointPattern":
        x = np.asarray(x, float).reshape(1, self.dim)
        return PointPattern(np.vstack([self._points, x]), self.window, d=self.dim)

    def remove(self, i: int) -> "PointPattern":
        return PointPattern(np.delete(self._points, i, axis=0), self.window, d=self.dim,
                            check=False)

    def to_csv(self) -> str:
        head = ",".join(f"x{k + 1}" for k in range(self.dim))
        rows = [",".join(repr(float(v)) for v in p) for p in self._points]
        return "\n".join([head] + rows) + "\n"

    @classmethod
    def from_csv(cls, text: str, window: Optional[Window] = None) -> "PointPattern":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        d = len(lines[0].split(","))
        pts = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        return cls(np.asarray(pts, float).reshape(-1, d), window, d=d)


Intensity = Union[float, Callable[[np.ndarray], np.ndarray]]


def _pair_dist(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


@dataclass(frozen=True)
class GibbsModel:
    """Poisson or pairwise-interaction model ``beta(x) * prod phi(x, y)``.

    ``beta`` is a constant or a vectorised function of ``(N, d)`` points.
    ``phi`` maps point arrays ``(N, d), (M, d)`` to an ``(N, M)`` matrix.
    ``radial`` optionally holds the profile of ``phi`` as a function of
    distance together with its interaction ``range`` (``phi = 1`` beyond it);
    it is used for fast evaluation only.
    """

    window: Window
    kind: str = "poisson"
    beta: Intensity = 1.0
    phi: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    beta_sup: Optional[float] = None
    radial: Optional[Callable[[np.ndarray], np.ndarray]] = None
    range: float = math.inf
    label: str = ""
    lipschitz: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("poisson", "pairwise-interaction"):
            raise ValidationError(f"unknown model kind {self.kind!r}")
        if self.kind == "pairwise-interaction" and self.phi is None:
            if self.radial is None:
                raise ValidationError("pairwise-interaction model needs phi")
            prof = self.radial
            object.__setattr__(self, "phi", lambda X, Y: prof(_pair_dist(X, Y)))
        if self.beta_sup is None:
            if callable(self.beta):
                raise ValidationError("beta_sup is required for a non-constant beta")
            object.__setattr__(self, "beta_sup", float(self.beta))
        if callable(self.beta) is False:
            if float(self.beta) < 0:
                raise ValidationError("activity must be nonnegative")
            if float(self.beta) > self.beta_sup + 1e-12:
                raise ValidationError("beta_sup below the constant activity")
        if self.kind == "pairwise-interaction":
            self._check_phi()

    # -- constructors -------------------------------------------------------
    @classmethod
    def poisson(cls, window: Window, beta: Intensity, beta_sup: Optional[float] = None):
        return cls(window, "poisson", beta, beta_sup=beta_sup, label="poisson", lipschitz=0.0)

    @classmethod
    def from_radial(cls, window: Window, beta: Intensity, profile, range_: float,
                    beta_sup: Optional[float] = None, label: str = "radial",
                    lipschitz: Optional[float] = None):
        r = float(range_)

        def prof(dist):
            out = np.ones_like(dist, dtype=float)
            inside = dist <= r
            if np.any(inside):
                out[inside] = profile(dist[inside])
            return out

        return cls(window, "pairwise-interaction", beta, beta_sup=beta_sup,
                   radial=prof, range=r, label=label, lipschitz=lipschitz)

    @classmethod
    def strauss(cls, window: Window, beta: Intensity, gamma: float, r: float,
                beta_sup: Optional[float] = None):
        """``phi = gamma`` within distance ``r``; ``gamma = 0`` gives hard core."""
        g = float(gamma)
        return cls.from_radial(window, beta, lambda s: np.full_like(s, g), r,
                               beta_sup, label=f"strauss(gamma={g}, r={r})")

    @classmethod
    def hard_core(cls, window: Window, beta: Intensity, r: float,
                  beta_sup: Optional[float] = None):
        return cls.strauss(window, beta, 0.0, r, beta_sup)

    @classmethod
    def soft_core_linear(cls, window: Window, beta: Intensity, floor: float, r: float,
                         beta_sup: Optional[float] = None):
        """``phi(s) = floor + (1 - floor) * min(1, s / r)``; Lipschitz ``(1-floor)/r``."""
        f = float(floor)
        return cls.from_radial(window, beta, lambda s: f + (1.0 - f) * s / r, r, beta_sup,
                               label=f"linear(floor={f}, r={r})", lipschitz=(1.0 - f) / r)

    # -- evaluation -----------------------------------------------------------
    @property
    def constant_beta(self) -> Optional[float]:
        return None if callable(self.beta) else float(self.beta)

    def beta_at(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if callable(self.beta):
            return np.asarray(self.beta(X), float).reshape(len(X))
        return np.full(len(X), float(self.beta))

    def phi_matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        if self.kind == "poisson" or len(Y) == 0 or len(X) == 0:
            return np.ones((len(X), len(Y)))
        return np.asarray(self.phi(X, Y), float)

    def total_beta(self, spec: Optional[QuadratureSpec] = None) -> float:
        if not callable(self.beta):
            return float(self.beta) * self.window.volume
        nodes, w = quadrature_nodes(self.window, spec or QuadratureSpec())
        vals = self.beta_at(nodes)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite integrand")
        return float(vals @ w)

    def is_inhibitory(self, n_check: int = 2000, seed: int = 12345) -> bool:
        if self.kind == "poisson":
            return True
        rng = np.random.default_rng(seed)
        X = self.window.uniform(rng, n_check)
        scale = self.window.diameter * np.logspace(-4, 0, n_check)[:, None]
        Y = np.clip(X + scale * rng.normal(size=X.shape), self.window.lo, self.window.hi)
        return bool(np.all(_diag_phi(self, X, Y) <= 1.0 + 1e-12))

    def _check_phi(self, n_check: int = 256, seed: int = 2024):
        rng = np.random.default_rng(seed)
        X = self.window.uniform(rng, n_check)
        Y = self.window.uniform(rng, n_check)
        a, b = _diag_phi(self, X, Y), _diag_phi(self, Y, X)
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValidationError("interaction function must be finite and nonnegative")
        if np.max(np.abs(a - b)) > 1e-12:
            raise ValidationError("interaction function is not symmetric")

    def describe(self) -> dict:
        return {"kind": self.kind, "beta": "function" if callable(self.beta) else self.beta,
                "beta_sup": self.beta_sup, "range": self.range, "label": self.label,
                "lipschitz": self.lipschitz, "window": self.window.to_dict()}


def _diag_phi(model: GibbsModel, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if model.radial is not None:
        return model.radial(np.linalg.norm(X - Y, axis=1))
    return np.array([model.phi(X[i:i + 1], Y[i:i + 1])[0, 0] for i in range(len(X))])


def _pattern_array(xi) -> np.ndarray:
    return xi.points if isinstance(xi, PointPattern) else np.asarray(xi, float)


def conditional_intensity(model: GibbsModel, x, xi) -> float:
    """Papangelou intensity of ``x`` given the configuration ``xi``."""
    x = np.asarray(x, float).reshape(1, model.window.dim)
    if not model.window.contains(x)[0]:
        raise ValidationError("point outside window")
    return float(conditional_intensity_many(model, x, xi)[0])


def conditional_intensity_many(model: GibbsModel, X: np.ndarray, xi) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    base = model.beta_at(X)
    pts = _pattern_array(xi).reshape(-1, model.window.dim)
    if model.kind == "poisson" or len(pts) == 0:
        return base
    return base * np.prod(model.phi_matrix(X, pts), axis=1)


def _sample_from_beta(model: GibbsModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` points with density proportional to ``beta``."""
    if not callable(model.beta):
        return model.window.uniform(rng, n)
    out = np.empty((n, model.window.dim))
    filled = 0
    while filled < n:
        need = n - filled
        cand = model.window.uniform(rng, max(2 * need, 16))
        keep = rng.random(len(cand)) * model.beta_sup < model.beta_at(cand)
        acc = cand[keep][:need]
        out[filled:filled + len(acc)] = acc
        filled += len(acc)
    return out


def sample_poisson(model: GibbsModel, rng: RngLike = None,
                   spec: Optional[QuadratureSpec] = None) -> PointPattern:
    """Exact Poisson sample with intensity ``beta``."""
    if model.kind != "poisson":
        raise UnsupportedModelError("sample_poisson requires a poisson model")
    g = as_generator(rng)
    mass = model.total_beta(spec)
    if mass <= 0:
        return PointPattern(np.empty((0, model.window.dim)), model.window)
    n = int(g.poisson(mass))
    return PointPattern(_sample_from_beta(model, g, n), model.window, check=False)


def default_burn_in(model: GibbsModel, spec: Optional[QuadratureSpec] = None) -> int:
    return int(50 * max(1, math.ceil(model.total_beta(spec))))


def _check_supported(model: GibbsModel):
    if not model.is_inhibitory():
        raise UnsupportedModelError("unsupported model: local stability not guaranteed")


def sample_gibbs_batch(model: GibbsModel, n_chains: int, n_jumps: Optional[int] = None,
                       rng: RngLike = None, spec: Optional[QuadratureSpec] = None
                       ) -> List[PointPattern]:
    """Run ``n_chains`` independent dominated birth-death chains from empty.

    Each chain runs for the continuous time ``T = n_jumps / (2 * int beta)``,
    which is the expected time to make ``n_jumps`` proposals at stationarity
    of the dominating Poisson chain.  Stopping at a fixed time (rather than a
    fixed jump count) avoids the size bias of the embedded jump chain.
    """
    _check_supported(model)
    g = as_generator(rng)
    d = model.window.dim
    B = model.total_beta(spec)
    if B <= 0:
        return [PointPattern(np.empty((0, d)), model.window) for _ in range(n_chains)]
    jumps = default_burn_in(model, spec) if n_jumps is None else int(n_jumps)
    horizon = jumps / (2.0 * B)
    cap = max(8, int(2 * B) + 8)
    pts = np.zeros((n_chains, cap, d))
    alive = np.zeros((n_chains, cap), bool)
    count = np.zeros(n_chains, np.int64)
    clock = np.zeros(n_chains)
    active = np.ones(n_chains, bool)
    rows_all = np.arange(n_chains)
    while True:
        rate = B + count
        clock[active] += g.exponential(1.0, active.sum()) / rate[active]
        active &= clock <= horizon
        idx = rows_all[active]
        if idx.size == 0:
            break
        birth = g.random(idx.size) * rate[idx] < B
        b_idx, d_idx = idx[birth], idx[~birth]
        if b_idx.size:
            x = _sample_from_beta(model, g, b_idx.size)
            if model.kind == "poisson":
                accept = np.ones(b_idx.size, bool)
            else:
                phis = _batch_phi(model, x, pts[b_idx], alive[b_idx])
                accept = g.random(b_idx.size) < phis
            rows = b_idx[accept]
            if rows.size:
                if np.any(count[rows] >= cap):
                    grow = cap
                    pts = np.concatenate([pts, np.zeros((n_chains, grow, d))], axis=1)
                    alive = np.concatenate([alive, np.zeros((n_chains, grow), bool)], axis=1)
                    cap += grow
                slot = np.argmin(alive[rows], axis=1)
                pts[rows, slot] = x[accept]
                alive[rows, slot] = True
                count[rows] += 1
        if d_idx.size:
            k = (g.random(d_idx.size) * count[d_idx]).astype(np.int64)
            csum = np.cumsum(alive[d_idx], axis=1)
            slot = np.argmax(csum > k[:, None], axis=1)
            alive[d_idx, slot] = False
            count[d_idx] -= 1
    return [PointPattern(pts[c][alive[c]], model.window, check=__debug__)
            for c in range(n_chains)]


def _batch_phi(model: GibbsModel, x: np.ndarray, P: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Product of ``phi(x_c, y)`` over alive ``y`` of chain ``c``."""
    if model.radial is not None:
        dist = np.sqrt(((P - x[:, None, :]) ** 2).sum(axis=2))
        vals = np.where(A, model.radial(np.where(A, dist, np.inf)), 1.0)
        return vals.prod(axis=1)
    out = np.ones(len(x))
    for c in range(len(x)):
        ys = P[c][A[c]]
        if len(ys):
            out[c] = np.prod(model.phi(x[c:c + 1], ys))
    return out


def sample_gibbs(model: GibbsModel, n_jumps: Optional[int] = None, rng: RngLike = None,
                 spec: Optional[QuadratureSpec] = None) -> PointPattern:
    """Approximate Gibbs sample from a dominated birth-death chain."""
    return sample_gibbs_batch(model, 1, n_jumps, rng, spec)[0]


def sample_vertices(model: GibbsModel, n: int, rng: RngLike = None,
                    n_jumps: Optional[int] = None) -> List[PointPattern]:
    """``n`` independent vertex patterns, exact for Poisson models."""
    g = as_generator(rng)
    if model.kind == "poisson":
        return [sample_poisson(model, g) for _ in range(n)]
    return sample_gibbs_batch(model, n, n_jumps, g)


# -- GNZ ----------------------------------------------------------------------

@dataclass(frozen=True)
class GnzReport:
    lhs_estimate: float
    rhs_estimate: float
    std_error: float
    n_samples: int

    @property
    def residual(self) -> float:
        return self.lhs_estimate - self.rhs_estimate

    def within(self, k: float = 3.0) -> bool:
        return abs(self.residual) <= k * self.std_error + 1e-12


# Test functions take (pattern array (n, d), query points (N, d)) -> (N,) values.
PatternTest = Callable[[np.ndarray, np.ndarray], np.ndarray]


def gnz_test_suite(window: Window) -> dict:
    """Bounded (or moment-bounded) test functions used by the residual checks."""
    lo, hi = window.lo, window.hi
    sub_hi = lo + 0.5 * (hi - lo)
    return {
        "zero": lambda P, X: np.zeros(len(X)),
        "constant": lambda P, X: np.full(len(X), 1.0),
        "count": lambda P, X: np.full(len(X), float(len(P))),
        "subwindow": lambda P, X: np.all(X <= sub_hi, axis=1).astype(float),
        "near-neighbours": lambda P, X: (
            np.minimum(3.0, (_pair_dist(X, P) <= 0.2 * window.diameter).sum(axis=1))
            if len(P) else np.zeros(len(X))),
    }


def _gnz_sides(model: GibbsModel, hs: Sequence[PatternTest], pts: np.ndarray,
               spec: QuadratureSpec, g: np.random.Generator):
    """Both sides for every test function, sharing nodes and intensities."""
    lhs = np.zeros(len(hs))
    for i in range(len(pts)):
        rest = np.delete(pts, i, axis=0)
        for k, h in enumerate(hs):
            lhs[k] += float(h(rest, pts[i:i + 1])[0])
    nodes, w = quadrature_nodes(model.window, spec, g)
    lam = conditional_intensity_many(model, nodes, pts)
    rhs = np.empty(len(hs))
    for k, h in enumerate(hs):
        vals = np.asarray(h(pts, nodes), float) * lam
        if not np.all(np.isfinite(vals)):
            raise NumericalError("non-finite integrand")
        rhs[k] = vals @ w
    return lhs, rhs


def _reports(lhs: np.ndarray, rhs: np.ndarray, cls):
    diff = lhs - rhs
    se = np.std(diff, axis=0, ddof=1) / np.sqrt(len(diff))
    return [cls(float(lhs[:, k].mean()), float(rhs[:, k].mean()), float(se[k]), len(diff))
            for k in range(lhs.shape[1])]


def gnz_suite_residuals(model: GibbsModel, suite: Dict[str, PatternTest], n_samples: int,
                        rng: RngLike = None, spec: Optional[QuadratureSpec] = None,
                        samples: Optional[List[PointPattern]] = None) -> Dict[str, "GnzReport"]:
    """Monte-Carlo estimate of both sides of the GNZ identity for each test function.

    The right-hand integral uses a randomly shifted grid by default so that
    each per-sample term is unbiased.
    """
    if n_samples < 2 and samples is None:
        raise ValidationError("n_samples must be at least 2")
    g = as_generator(rng)
    spec = spec or QuadratureSpec(resolution=16, shift=True)
    pats = samples if samples is not None else sample_vertices(model, n_samples, g)
    if len(pats) < 2:
        raise ValidationError("n_samples must be at least 2")
    names = list(suite)
    hs = [suite[k] for k in names]
    lhs, rhs = np.empty((len(pats), len(hs))), np.empty((len(pats), len(hs)))
    for k, p in enumerate(pats):
        lhs[k], rhs[k] = _gnz_sides(model, hs, _pattern_array(p), spec, g)
    return dict(zip(names, _reports(lhs, rhs, GnzReport)))


def gnz_residual(model: GibbsModel, h: PatternTest, n_samples: int, rng: RngLike = None,
                 spec: Optional[QuadratureSpec] = None,
                 samples: Optional[List[PointPattern]] = None) -> GnzReport:
    return gnz_suite_residuals(model, {"h": h}, n_samples, rng, spec, samples)["h"]


__all__ = [
    "PointPattern", "GibbsModel", "GnzReport", "UnsupportedModelError",
    "conditional_intensity", "conditional_intensity_many", "sample_poisson",
    "sample_gibbs", "sample_gibbs_batch", "sample_vertices", "default_burn_in",
    "gnz_residual", "gnz_suite_residuals", "gnz_test_suite",
]
