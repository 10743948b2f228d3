"""Thinned and contracted Boolean percolation graphs with Pareto radii."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import beta as beta_fn, comb

from .core import NumericalError, RngLike, ValidationError, Window, as_generator
from .graph import SpatialGraph
from .point_process import PointPattern

MAX_EXPECTED_POINTS = 1_000_000


@dataclass(frozen=True)
class BooleanConfig:
    """Radii ``R ~ Pareto(r0, a)``, contraction ``q = r**-b``, ``psi(s) = s**gamma / r**delta``."""

    d: int = 2
    a: float = 2.0
    b: float = 2.0
    gamma: float = 0.5
    delta: float = 0.0
    r_list: Tuple[float, ...] = (1e4, 2.1544346900318843e4, 4.641588833612777e4, 1e5)
    window: Window = field(default_factory=lambda: Window.box(5.0, 2))
    mu: float = 0.16
    r0: float = 1.0
    n_samples: int = 300

    def __post_init__(self):
        object.__setattr__(self, "r_list", tuple(float(r) for r in self.r_list))
        if self.d != self.window.dim:
            raise ValidationError("config dimension differs from the window dimension")
        if not (self.a > 0 and self.b > 0):
            raise ValidationError("tail exponent a and contraction exponent b must be positive")
        if not (0 < self.gamma <= 1):
            raise ValidationError("gamma must lie in (0, 1]")
        if self.delta < 0:
            raise ValidationError("delta must be nonnegative")
        if self.mu <= 0 or self.r0 <= 0:
            raise ValidationError("mu and r0 must be positive")
        if any(r < self.r0 for r in self.r_list):
            raise ValidationError("every cutoff must satisfy P(R >= r) > 0 with r >= r0")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be positive")

    # -- derived quantities -------------------------------------------------
    def p(self, r: float) -> float:
        """Tail probability ``P(R >= r)``."""
        return 1.0 if r <= self.r0 else (r / self.r0) ** (-self.a)

    def q(self, r: float) -> float:
        return r ** (-self.b)

    def intensity(self, r: float) -> float:
        """Intensity of the thinned, contracted centres on the window."""
        return self.mu * self.p(r) / self.q(r)

    def psi(self, s, r: float):
        return np.asarray(s, float) ** self.gamma / r ** self.delta

    def target_radius(self, r: float) -> float:
        """``t = q**(1/d) * r`` so the target kernel is ``1{|x-y| <= 2t}``."""
        return self.q(r) ** (1.0 / self.d) * r

    def to_dict(self) -> dict:
        return {"d": self.d, "a": self.a, "b": self.b, "gamma": self.gamma,
                "delta": self.delta, "r_list": list(self.r_list), "window": self.window.to_dict(),
                "mu": self.mu, "r0": self.r0, "n_samples": self.n_samples}


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def radial_expectation(cfg: BooleanConfig, r: float) -> float:
    """``E[(R^ - r) R^**(d-1) | R >= r]`` with ``R^ = r + psi(R - r)``, by quadrature."""
    d, a, g = cfg.d, cfg.a, cfg.gamma
    if a <= g * d:
        raise NumericalError("radial expectation is infinite (a <= gamma * d)")
    scale = r ** (g - cfg.delta)

    # substitute R = r (1 + u): conditional density a (1 + u)**(-a-1)
    def integrand(u):
        psi = scale * u ** g
        return psi * (r + psi) ** (d - 1) * a * (1.0 + u) ** (-a - 1.0)

    parts = [sp_integrate.quad(integrand, lo, hi, limit=200, epsabs=0, epsrel=1e-12)[0]
             for lo, hi in ((0.0, 1.0), (1.0, 1e3))]
    parts.append(sp_integrate.quad(integrand, 1e3, np.inf, limit=200, epsabs=0,
                                   epsrel=1e-10)[0])
    return float(math.fsum(parts))


def radial_expectation_closed_form(cfg: BooleanConfig, r: float) -> float:
    """Beta-function evaluation of the same expectation (integer ``d``)."""
    d, a, g = cfg.d, cfg.a, cfg.gamma
    if a <= g * d:
        raise NumericalError("radial expectation is infinite (a <= gamma * d)")
    total = 0.0
    for l in range(d):
        k = l + 1
        moment = r ** ((g - cfg.delta) * k) * a * beta_fn(g * k + 1.0, a - g * k)
        total += comb(d - 1, l) * r ** (d - 1 - l) * moment
    return float(total)


def sample_boolean_pair(cfg: BooleanConfig, r_star: float, rng: RngLike = None
                        ) -> Tuple[SpatialGraph, SpatialGraph]:
    """Boolean percolation graph and target RGG on the same contracted centres.

    Thinned centres are drawn directly: their count is Poisson with mean
    ``mu * p(r) * |X| / q`` and their radii follow ``Pareto(r, a)``, which is
    the law of the retained centres of the unthinned model.
    """
    g = as_generator(rng)
    q = cfg.q(r_star)
    p = cfg.p(r_star)
    if p <= 0:
        raise ValidationError("trivial thinning")
    vol = cfg.window.volume
    mean = cfg.mu * p * vol / q
    if mean > MAX_EXPECTED_POINTS:
        raise ValidationError("memory guard: expected point count exceeds 1e6")
    n = int(g.poisson(mean))
    y = cfg.window.uniform(g, n)
    radii = r_star * g.random(n) ** (-1.0 / cfg.a) if n else np.empty(0)
    rhat = r_star + cfg.psi(radii - r_star, r_star)
    contract = q ** (1.0 / cfg.d)
    pts = PointPattern(y, cfg.window, check=False)
    if n < 2:
        return SpatialGraph(pts), SpatialGraph(pts)
    diff = y[:, None, :] - y[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) / contract
    boolean = np.triu(dist <= rhat[:, None] + rhat[None, :], 1)
    target = np.triu(dist * contract <= 2.0 * cfg.target_radius(r_star), 1)
    return (SpatialGraph.from_adjacency(pts, boolean | boolean.T),
            SpatialGraph.from_adjacency(pts, target | target.T))


def sample_boolean_percolation(cfg: BooleanConfig, r_star: float,
                               rng: RngLike = None) -> SpatialGraph:
    return sample_boolean_pair(cfg, r_star, rng)[0]


__all__ = ["BooleanConfig", "unit_ball_volume", "radial_expectation",
           "radial_expectation_closed_form", "sample_boolean_pair",
           "sample_boolean_percolation", "MAX_EXPECTED_POINTS"]
