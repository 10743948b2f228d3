"""Windows, base metrics, quadrature and seeded random streams."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine cannot produce a trustworthy value."""


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lower, upper]`` in R^d with Lebesgue reference measure."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or len(lo) == 0:
            raise ValidationError("window bounds must have equal positive length")
        if len(lo) > 3:
            raise ValidationError("window dimension above 3 is not supported")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValidationError("window requires lower < upper on every axis")
        if not all(np.isfinite(lo + hi)):
            raise ValidationError("window bounds must be finite")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d: int = 2) -> "Window":
        return cls((0.0,) * d, (1.0,) * d)

    @classmethod
    def box(cls, side: float, d: int = 2) -> "Window":
        return cls((0.0,) * d, (float(side),) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))

    def midpoint_grid(self, resolution: int, shift: Optional[np.ndarray] = None):
        """Nodes and common cell weight of a tensor midpoint grid.

        ``shift`` in [0,1)^d moves every node by the same fraction of a cell,
        which turns the rule into an unbiased estimator when drawn uniformly.
        """
        h = (self.hi - self.lo) / resolution
        offset = np.full(self.dim, 0.5) if shift is None else np.asarray(shift, float)
        axes = [self.lo[k] + h[k] * (np.arange(resolution) + offset[k]) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        return nodes, float(np.prod(h))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class BaseMetricParams:
    C_V: float = 1.0
    C_E: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "C_V", float(self.C_V))
        object.__setattr__(self, "C_E", float(self.C_E))
        if not (self.C_V > 0 and self.C_E > 0):
            raise ValidationError("metric caps C_V and C_E must be positive")


def dist_v(x, y, params: BaseMetricParams) -> float:
    """Truncated Euclidean distance ``min(|x - y|, C_V)``."""
    d = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    return min(d, params.C_V)


def pairwise_dist_v(X: np.ndarray, Y: np.ndarray, cap: float) -> np.ndarray:
    X = np.asarray(X, float).reshape(len(X), -1)
    Y = np.asarray(Y, float).reshape(len(Y), -1)
    diff = X[:, None, :] - Y[None, :, :]
    return np.minimum(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), cap)


@dataclass(frozen=True)
class QuadratureSpec:
    """How integrals over a window are approximated.

    ``resolution`` is points per axis for ``tensor-grid`` and the number of
    samples for ``monte-carlo``.  ``None`` picks 64 per axis (32 in 3-d) or
    4096 samples.  With ``shift=True`` the grid is randomly translated, which
    requires a random generator at call time.
    """

    mode: str = "tensor-grid"
    resolution: Optional[int] = None
    tolerance: float = 1e-9
    shift: bool = False

    def __post_init__(self):
        if self.mode not in ("tensor-grid", "monte-carlo"):
            raise ValidationError(f"unknown quadrature mode {self.mode!r}")
        if self.resolution is not None and self.resolution < 2:
            raise ValidationError("quadrature resolution must be at least 2")
        if not self.tolerance > 0:
            raise ValidationError("quadrature tolerance must be positive")

    def points_per_axis(self, d: int) -> int:
        if self.resolution is not None:
            return int(self.resolution)
        return 64 if d <= 2 else 32

    def n_samples(self) -> int:
        return int(self.resolution) if self.resolution is not None else 4096

    def to_dict(self) -> dict:
        return {"mode": self.mode, "resolution": self.resolution,
                "tolerance": self.tolerance, "shift": self.shift}


def quadrature_nodes(window: Window, spec: QuadratureSpec,
                     rng: Optional[np.random.Generator] = None):
    """Return ``(nodes, weights)`` for the rule described by ``spec``."""
    if spec.mode == "tensor-grid":
        shift = None
        if spec.shift:
            if rng is None:
                raise ValidationError("a shifted grid needs a random generator")
            shift = rng.random(window.dim)
        nodes, w = window.midpoint_grid(spec.points_per_axis(window.dim), shift)
        return nodes, np.full(len(nodes), w)
    if rng is None:
        raise ValidationError("monte-carlo quadrature needs a random generator")
    n = spec.n_samples()
    return window.uniform(rng, n), np.full(n, window.volume / n)


def integrate(f: Callable[[np.ndarray], np.ndarray], window: Window,
              spec: Optional[QuadratureSpec] = None,
              rng: Optional[np.random.Generator] = None,
              return_error: bool = False):
    """Approximate the Lebesgue integral of a vectorised ``f`` over ``window``.

    ``f`` maps an ``(N, d)`` array of points to ``N`` values.  In monte-carlo
    mode ``return_error=True`` also returns the standard error (0 for grids).
    """
    spec = spec or QuadratureSpec()
    nodes, w = quadrature_nodes(window, spec, rng)
    vals = np.asarray(f(nodes), dtype=float).reshape(-1)
    if vals.shape[0] != nodes.shape[0]:
        raise ValidationError("integrand must return one value per node")
    if not np.all(np.isfinite(vals)):
        raise NumericalError("non-finite integrand")
    value = float(np.dot(vals, w))
    if not return_error:
        return value
    if spec.mode == "monte-carlo":
        se = window.volume * float(np.std(vals, ddof=1)) / np.sqrt(len(vals))
    else:
        se = 0.0
    return value, se


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by ``(seed, stream)``."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & 0xFFFFFFFFFFFFFFFF,
                                    spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream * 1_000_003 + 1 + int(k))


RngLike = Union[None, int, RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def as_points(x, d: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, d) if arr.size else np.empty((0, d))
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValidationError(f"expected points of dimension {d}")
    return arr


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


__all__ = [
    "ValidationError", "NumericalError", "Window", "BaseMetricParams", "dist_v",
    "pairwise_dist_v", "QuadratureSpec", "quadrature_nodes", "integrate",
    "RngStream", "as_generator", "as_points", "loglog_slope",
]
