"""Closed-form Stein bounds: factors, coupling-time bound and model-specific totals."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import integrate as sp_integrate

from .boolean import BooleanConfig, radial_expectation, unit_ball_volume
from .core import NumericalError, QuadratureSpec, ValidationError, Window, quadrature_nodes
from .gospa import GospaParams
from .graph import EdgeModel
from .lattice import DiscretisationGrid
from .point_process import GibbsModel

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class BoundReport:
    """A bound value with the named pieces it is assembled from.

    ``composition`` is ``("sum" | "product" | "min", names)``: the total is
    that operation applied to ``terms[name]`` for the listed names.  Other
    entries of ``terms`` are informational factors.
    """

    total: float
    terms: dict
    params: dict
    composition: Tuple[str, Tuple[str, ...]]
    name: str = ""

    def recompute(self) -> float:
        op, names = self.composition
        vals = [self.terms[k] for k in names]
        if op == "sum":
            return float(math.fsum(vals))
        if op == "product":
            return float(np.prod(vals))
        if op == "min":
            return float(min(vals))
        raise ValidationError(f"unknown composition {op!r}")

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "name": self.name, "total": self.total,
                "terms": self.terms, "params": self.params,
                "composition": {"op": self.composition[0], "terms": list(self.composition[1])}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _report(name: str, op: str, names, terms: dict, params: dict) -> BoundReport:
    terms = {k: float(v) for k, v in terms.items()}
    if any(v < 0 for v in terms.values()):
        raise NumericalError("negative bound term")
    rep = BoundReport(0.0, terms, params, (op, tuple(names)), name)
    return BoundReport(rep.recompute(), terms, params, (op, tuple(names)), name)


# -- Stein factors ----------------------------------------------------------------

def _check_lambda(Lambda: float):
    if not (Lambda > 0 and math.isfinite(Lambda)):
        raise ValidationError("total intensity Lambda must be positive and finite")


def stein_factor_vertex(Lambda: float, params: GospaParams) -> float:
    """``min{C_i, (1 + (1 - e^-L) log+ L) C~_i / L}``."""
    _check_lambda(Lambda)
    logp = max(math.log(Lambda), 0.0)
    second = (1.0 + -math.expm1(-Lambda) * logp) / Lambda * params.penalty()
    return min(params.cap(), second)


def stein_factor_edge(Lambda: float, C_E: float = 1.0) -> float:
    """``min{1/4, (2 - e^-L)/L - (3/2 - e^-L)/L^2} * C_E``."""
    _check_lambda(Lambda)
    if Lambda < 1.0:
        # the second term is only valid for Lambda >= 1 and turns negative near 0
        return 0.25 * C_E
    e = math.exp(-Lambda)
    second = (2.0 - e) / Lambda - (1.5 - e) / Lambda ** 2
    return min(0.25, second) * C_E


# -- coupling-time bound -----------------------------------------------------------

def coupling_bound_bstar(epsilon: float, c: float, n_star: Union[int, float],
                         infinite_form: str = "log") -> float:
    """Upper bound on the expected coupling time of two graphs one vertex apart.

    ``n_star = math.inf`` uses ``(1+eps) * -log(1-eps) / eps`` (``"log"``,
    infinite for ``eps >= 1``) or ``(1+eps) * (e^eps - 1) / eps`` (``"exp"``).
    """
    if epsilon < 0 or c < 0 or not math.isfinite(epsilon) or not math.isfinite(c):
        raise ValidationError("epsilon and c must be finite and nonnegative")
    if infinite_form not in ("log", "exp"):
        raise ValidationError("infinite_form must be 'log' or 'exp'")
    if n_star == math.inf:
        if epsilon == 0:
            return 1.0
        if infinite_form == "exp":
            return (1.0 + epsilon) * math.expm1(epsilon) / epsilon
        if epsilon >= 1:
            return math.inf
        return (1.0 + epsilon) * -math.log1p(-epsilon) / epsilon
    n = int(n_star)
    if n != n_star or n < 1:
        raise ValidationError("n_star must be a positive integer or infinity")
    # tail part: eps^(n-1) * sum_k a_k (1 + c/(n+k)), a_0 = 1/n, a_{k+1} = a_k c/(n+k+1)
    head = 0.0
    if n == 1 or epsilon > 0:
        a = 1.0 / n
        terms = []
        k = 0
        while True:
            t = a * (1.0 + c / (n + k))
            terms.append(t)
            if t < 1e-17 * terms[0] and k > c:
                break
            a *= c / (n + k + 1)
            k += 1
            if a == 0.0:
                break
        head = epsilon ** (n - 1) * math.fsum(terms)
    tail = (1.0 + epsilon) * math.fsum(epsilon ** (i - 1) / i for i in range(1, n))
    return head + tail


def default_n_star(epsilon: float, c: float) -> Union[int, float]:
    if epsilon <= 0:
        return math.inf
    return max(1, math.ceil(c / epsilon))


def pip_epsilon(model: GibbsModel, spec: Optional[QuadratureSpec] = None,
                method: str = "auto", z_resolution: int = 17) -> float:
    """Upper bound on ``sup int |lambda(x|xi+z) - lambda(x|xi)| dx``.

    ``"quadrature"`` maximises ``int beta(x)(1 - phi(x, z)) dx`` over a grid
    of ``z``.  ``"radial"`` uses ``beta_sup * int_{R^d} (1 - phi)`` for radial
    interactions, which ignores clipping by the window and so never
    underestimates.  ``"auto"`` picks ``"radial"`` when available.
    """
    if not model.is_inhibitory():
        raise ValidationError("unsupported model: local stability not guaranteed")
    if model.kind == "poisson":
        return 0.0
    if method == "auto":
        method = "radial" if model.radial is not None and math.isfinite(model.range) \
            else "quadrature"
    d = model.window.dim
    if method == "radial":
        if model.radial is None or not math.isfinite(model.range):
            raise ValidationError("radial epsilon needs a finite-range radial interaction")
        r = model.range
        f = lambda s: (1.0 - float(model.radial(np.array([s]))[0])) * s ** (d - 1)
        val = sp_integrate.quad(f, 0.0, r, limit=200, epsabs=1e-14, epsrel=1e-12,
                                points=[r * (1 - 1e-9)])[0]
        return float(model.beta_sup * d * unit_ball_volume(d) * val)
    if method != "quadrature":
        raise ValidationError(f"unknown epsilon method {method!r}")
    spec = spec or QuadratureSpec(resolution=128 if d <= 2 else 32)
    nodes, w = quadrature_nodes(model.window, spec)
    bvals = model.beta_at(nodes) * w
    zs, _ = model.window.midpoint_grid(z_resolution)
    zs = np.vstack([zs, 0.5 * (model.window.lo + model.window.hi)])
    best = 0.0
    for chunk in np.array_split(zs, max(1, len(zs) // 16)):
        vals = (1.0 - model.phi_matrix(nodes, chunk)).T @ bvals
        best = max(best, float(vals.max()))
    return best


def pip_coupling_constants(model: GibbsModel, spec: Optional[QuadratureSpec] = None,
                           method: str = "auto") -> dict:
    """``epsilon``, ``c = int beta`` (bounds every difference of intensities) and ``n*``."""
    eps = pip_epsilon(model, spec, method)
    c = model.total_beta(spec)
    n_star = default_n_star(eps, c)
    return {"epsilon": eps, "c": c, "n_star": n_star,
            "B_star": coupling_bound_bstar(eps, c, n_star)}


def glauber_expected_coupling_time(n: int, m: int) -> float:
    """``n * H_m``: expected time until ``m`` marked coordinates have all been refreshed."""
    if not (1 <= m <= n):
        raise ValidationError("need 1 <= m <= n")
    return float(n * math.fsum(1.0 / i for i in range(1, m + 1)))


# -- soft RGG -----------------------------------------------------------------------

Fn = Union[float, Callable[[np.ndarray], np.ndarray]]


def _eval(f: Fn, X: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.asarray(f(X), float).reshape(len(X))
    return np.full(len(X), float(f))


def _kappa_matrix(k, X, Y):
    if isinstance(k, EdgeModel):
        return k.probabilities(X, Y)
    if callable(k):
        return np.asarray(k(X, Y), float)
    return np.full((len(X), len(Y)), float(k))


def double_integral(g: Callable[[np.ndarray, np.ndarray], np.ndarray], window: Window,
                    spec: Optional[QuadratureSpec] = None, chunk: int = 256) -> float:
    """``int int g(x, y) dx dy`` over ``window**2`` on a product midpoint grid."""
    spec = spec or QuadratureSpec(resolution=32 if window.dim <= 2 else 12)
    nodes, w = quadrature_nodes(window, spec)
    total = 0.0
    for s in range(0, len(nodes), chunk):
        block = np.asarray(g(nodes[s:s + chunk], nodes), float)
        if not np.all(np.isfinite(block)):
            raise NumericalError("non-finite integrand")
        total += float(w[s:s + chunk] @ block @ w)
    return total


def soft_rgg_bound(lambda1: Fn, lambda2: Fn, kappa1, kappa2, window: Window,
                   params: GospaParams, mode: str = "wasserstein",
                   spec: Optional[QuadratureSpec] = None) -> BoundReport:
    """Distance between two Poisson RGGs; the second law is the target."""
    spec = spec or QuadratureSpec(resolution=32 if window.dim <= 2 else 12)
    nodes, w = quadrature_nodes(window, spec)
    l1, l2 = _eval(lambda1, nodes), _eval(lambda2, nodes)
    vdiff = float(np.abs(l1 - l2) @ w)
    L2 = float(l2 @ w)
    edge_int = 0.0
    for s in range(0, len(nodes), 256):
        X = nodes[s:s + 256]
        diff = np.abs(_kappa_matrix(kappa1, X, nodes) - _kappa_matrix(kappa2, X, nodes))
        if mode == "sup-norm":
            edge_int += float((w[s:s + 256] * l1[s:s + 256]) @ diff @ (w * l2))
        else:
            edge_int += float((w[s:s + 256] * l2[s:s + 256]) @ diff @ (w * l1))
    p = {"mode": mode, "Lambda2": L2, "metric": params.to_dict(),
         "quadrature": spec.to_dict(), "window": window.to_dict()}
    if mode == "sup-norm":
        return _report("soft-rgg-sup", "sum", ["vertex_term", "edge_term"],
                       {"vertex_term": 2.0 * vdiff, "edge_term": edge_int,
                        "intensity_l1": vdiff, "kappa_l1": edge_int}, p)
    if mode != "wasserstein":
        raise ValidationError(f"unknown bound mode {mode!r}")
    if L2 <= 0:
        raise ValidationError("target total intensity must be positive")
    cv, ce = stein_factor_vertex(L2, params), stein_factor_edge(L2, params.C_E)
    return _report("soft-rgg-wasserstein", "sum", ["vertex_term", "edge_term"],
                   {"vertex_term": cv * vdiff, "edge_term": ce * edge_int, "c_V": cv,
                    "c_E": ce, "intensity_l1": vdiff, "kappa_l1": edge_int}, p)


# -- Boolean percolation -------------------------------------------------------------

def boolean_bound(cfg: BooleanConfig, r_star: float, params: GospaParams,
                  vertex_model: str = "poisson") -> BoundReport:
    """Distance between the Boolean percolation graph and its Poisson RGG limit.

    ``vertex_model="dpp"`` adds the determinantal-centre vertex term
    ``2 c_V lambda |X| q / (1 - q)``.
    """
    p = cfg.p(r_star)
    if p <= 0:
        raise ValidationError("trivial thinning")
    q = cfg.q(r_star)
    lam = cfg.intensity(r_star)
    vol = cfg.window.volume
    Lam = lam * vol
    d = cfg.d
    cd = unit_ball_volume(d)
    expected_pre = cfg.mu * vol / q
    radial = radial_expectation(cfg, r_star)
    ce = stein_factor_edge(Lam, params.C_E)
    edge = ce * lam * cd * p * q * expected_pre * d * 2 ** d * radial
    if vertex_model == "poisson":
        vterm = 0.0
    elif vertex_model == "dpp":
        if q >= 1:
            raise ValidationError("dpp vertex term needs q < 1")
        vterm = 2.0 * stein_factor_vertex(Lam, params) * Lam * q / (1.0 - q)
    else:
        raise ValidationError(f"unknown vertex model {vertex_model!r}")
    return _report("boolean", "sum", ["vertex_term", "edge_term"],
                   {"vertex_term": vterm, "edge_term": edge, "c_E": ce, "lambda": lam,
                    "Lambda": Lam, "p": p, "q": q, "c_d": cd, "expected_preimage_count": expected_pre,
                    "radial_expectation": radial},
                   {"config": cfg.to_dict(), "r_star": r_star, "metric": params.to_dict(),
                    "vertex_model": vertex_model})


# -- discretisation -----------------------------------------------------------------

@dataclass(frozen=True)
class DiscretisationBounds:
    general: BoundReport
    lipschitz: Optional[BoundReport] = None


def discretisation_bound(model: GibbsModel, edge_model: EdgeModel, grid: DiscretisationGrid,
                         params: GospaParams, lipschitz: Optional[Tuple[float, float]] = None,
                         spec: Optional[QuadratureSpec] = None,
                         epsilon_method: str = "auto") -> DiscretisationBounds:
    """General and (optionally) Lipschitz bounds for a lattice approximation."""
    if callable(model.beta):
        raise ValidationError("non-constant beta is not supported for discretisation")
    beta = float(model.beta)
    spec = spec or QuadratureSpec(resolution=64 if model.window.dim <= 2 else 16)
    r_v = grid.r_v
    consts = pip_coupling_constants(model, method=epsilon_method)
    bstar = consts["B_star"]
    ci = params.cap()
    vol = model.window.volume

    def phi_gap(X, Y):
        return np.abs(model.phi_matrix(X, Y) - model.phi_matrix(grid.t(X), grid.t(Y)))

    def kappa_gap(X, Y):
        return np.abs(edge_model.probabilities(X, Y)
                      - edge_model.probabilities(grid.t(X), grid.t(Y)))

    phi_l1 = 0.0 if model.kind == "poisson" else double_integral(phi_gap, model.window, spec)
    kappa_l1 = double_integral(kappa_gap, model.window, spec)
    base_params = {"beta": beta, "grid_cells": grid.n_cells, "r_V": r_v,
                   "metric": params.to_dict(), "model": model.describe(),
                   "edge_model": edge_model.label, **{k: consts[k] for k in ("epsilon", "c")},
                   "n_star": consts["n_star"] if math.isfinite(consts["n_star"]) else "inf"}
    general = _report("discretisation-general", "sum", ["r_V", "vertex_term", "edge_term"],
                      {"r_V": r_v, "vertex_term": ci * bstar * beta ** 2 * phi_l1,
                       "edge_term": 0.25 * params.C_E * beta ** 2 * kappa_l1,
                       "B_star": bstar, "phi_l1": phi_l1, "kappa_l1": kappa_l1}, base_params)
    lip = None
    if lipschitz is not None:
        LV, LE = (float(v) for v in lipschitz)
        factor = 1.0 + (2.0 * ci * bstar * LV + 0.5 * params.C_E * LE) * beta ** 2 * vol ** 2
        lip = _report("discretisation-lipschitz", "product", ["factor", "r_V"],
                      {"factor": factor, "r_V": r_v, "B_star": bstar, "L_V": LV, "L_E": LE},
                      base_params)
    return DiscretisationBounds(general, lip)


__all__ = [
    "BoundReport", "stein_factor_vertex", "stein_factor_edge", "coupling_bound_bstar",
    "default_n_star", "pip_epsilon", "pip_coupling_constants",
    "glauber_expected_coupling_time", "soft_rgg_bound", "double_integral", "boolean_bound",
    "DiscretisationBounds", "discretisation_bound",
]
