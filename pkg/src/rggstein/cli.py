"""Command-line entry point.

Runs are driven by one TOML document with flat sections.  Every output
carries the SHA-256 of the resolved configuration (seed included).

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .boolean import BooleanConfig
from .bounds import (boolean_bound, coupling_bound_bstar, default_n_star,
                     glauber_expected_coupling_time, pip_coupling_constants,
                     stein_factor_edge, stein_factor_vertex)
from .core import NumericalError, QuadratureSpec, RngStream, ValidationError, Window
from .experiments import (ResultsTable, config_hash, run_boolean_experiment,
                          run_discretisation_experiment, run_soft_rgg_experiment,
                          simulate_glauber_coupling)
from .gbdp import run_coupled_gbdp, run_gbdp
from .gospa import GospaParams, gospa_result
from .graph import SCHEMA_VERSION, EdgeModel, SpatialGraph, empty_graph, sample_rgg_batch
from .point_process import GibbsModel
from .transport import empirical_wasserstein

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

# section -> key -> default; the type of the default is enforced (int accepted for float)
SCHEMA: Dict[str, Dict[str, Any]] = {
    "": {"seed": 0, "output": "", "workers": 1},
    "window": {"dim": 2, "side": 1.0},
    "vertex": {"kind": "poisson", "beta": 5.0, "gamma": 0.5, "r": 0.05, "floor": 0.5},
    "edge": {"kind": "constant", "p": 0.5, "r": 0.1, "scale": 0.5},
    "metric": {"C_V": 1.0, "C_E": 1.0, "variant": 1, "edge_metric": "indicator",
               "exact_limit": 7},
    "quadrature": {"mode": "tensor-grid", "resolution": 64},
    "sample": {"n": 1},
    "gbdp": {"horizon": 10.0, "start": "empty"},
    "boolean": {"d": 2, "a": 2.0, "b": 2.0, "gamma": 0.5, "delta": 0.0,
                "r_list": [1e4, 2.1544346900318843e4, 4.641588833612777e4, 1e5],
                "side": 5.0, "mu": 0.16, "r0": 1.0},
    "discretisation": {"grids": [2, 4, 8, 16]},
    "soft_rgg": {"lambda2": 5.0, "kappa2": 0.5, "lambda_steps": [0.0, 0.25, 0.5],
                 "kappa_steps": [0.0, 0.05, 0.1]},
    "experiment": {"n_samples": 300, "null_reps": 50},
    "glauber": {"n": [4, 5, 6, 7, 8], "reps": 100_000},
}

CHOICES = {
    ("vertex", "kind"): ("poisson", "strauss", "hard-core", "soft-core"),
    ("edge", "kind"): ("constant", "threshold", "exponential"),
    ("metric", "edge_metric"): ("indicator", "endpoint-aware"),
    ("quadrature", "mode"): ("tensor-grid", "monte-carlo"),
    ("gbdp", "start"): ("empty", "stationary"),
}


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, Any]]
    source: Optional[str] = None
    explicit: Dict[str, set] = field(default_factory=dict)

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.values[section]

    @property
    def seed(self) -> int:
        return int(self.values[""]["seed"])

    def to_dict(self) -> dict:
        """Resolved configuration without output path and worker count (they don't change results)."""
        out = {(k or "run"): dict(v) for k, v in self.values.items()}
        for k in ("output", "workers"):
            out["run"].pop(k)
        return out

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    # -- model builders --------------------------------------------------------------
    def window(self) -> Window:
        w = self["window"]
        return Window.box(float(w["side"]), int(w["dim"]))

    def vertex_model(self) -> GibbsModel:
        v, w = self["vertex"], self.window()
        kind = v["kind"]
        if kind == "poisson":
            return GibbsModel.poisson(w, v["beta"])
        if kind == "strauss":
            return GibbsModel.strauss(w, v["beta"], v["gamma"], v["r"])
        if kind == "hard-core":
            return GibbsModel.hard_core(w, v["beta"], v["r"])
        return GibbsModel.soft_core_linear(w, v["beta"], v["floor"], v["r"])

    def edge_model(self) -> EdgeModel:
        e = self["edge"]
        if e["kind"] == "constant":
            return EdgeModel.constant(e["p"])
        if e["kind"] == "threshold":
            return EdgeModel.threshold(e["r"], e["p"])
        return EdgeModel.exponential(e["p"], e["scale"])

    def metric(self) -> GospaParams:
        m = self["metric"]
        return GospaParams.make(m["C_V"], m["C_E"], m["variant"], m["edge_metric"],
                                m["exact_limit"])

    def quadrature(self) -> QuadratureSpec:
        q = self["quadrature"]
        return QuadratureSpec(mode=q["mode"], resolution=q["resolution"])

    def boolean(self) -> BooleanConfig:
        b = self["boolean"]
        d = int(b["d"])
        return BooleanConfig(d=d, a=b["a"], b=b["b"], gamma=b["gamma"], delta=b["delta"],
                             r_list=tuple(b["r_list"]), window=Window.box(b["side"], d),
                             mu=b["mu"], r0=b["r0"],
                             n_samples=self["experiment"]["n_samples"])


def _check_type(where: str, default: Any, value: Any) -> Any:
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(x, (int, float)) and
                                             not isinstance(x, bool) for x in value)
        if ok and default and isinstance(default[0], float):
            value = [float(x) for x in value]
    else:
        ok = True
    if not ok:
        raise ValidationError(f"config key {where!r} has the wrong type")
    return value


def resolve_config(doc: Dict[str, Any], source: Optional[str] = None) -> RunConfig:
    """Fill defaults, reject unknown keys and check values."""
    values = {s: dict(keys) for s, keys in SCHEMA.items()}
    values = json.loads(json.dumps(values))  # deep copy of list defaults
    explicit: Dict[str, set] = {s: set() for s in SCHEMA}
    for key in sorted(doc):
        val = doc[key]
        if isinstance(val, dict):
            if key not in SCHEMA or key == "":
                raise ValidationError(f"unknown config section {key!r}")
            for sub in sorted(val):
                if sub not in SCHEMA[key]:
                    raise ValidationError(f"unknown config key '{key}.{sub}'")
                values[key][sub] = _check_type(f"{key}.{sub}", SCHEMA[key][sub], val[sub])
                explicit[key].add(sub)
        else:
            if key not in SCHEMA[""]:
                raise ValidationError(f"unknown config key {key!r}")
            values[""][key] = _check_type(key, SCHEMA[""][key], val)
            explicit[""].add(key)
    for (sec, key), allowed in CHOICES.items():
        if values[sec][key] not in allowed:
            raise ValidationError(f"config key '{sec}.{key}' must be one of {', '.join(allowed)}")
    p = values["edge"]["p"]
    if not 0.0 <= p <= 1.0:
        raise ValidationError("invalid connection probability")
    for sec, key in (("vertex", "beta"), ("window", "side"), ("experiment", "n_samples"),
                     ("sample", "n")):
        if not values[sec][key] > 0:
            raise ValidationError(f"config key '{sec}.{key}' must be positive")
    if values[""]["workers"] < 1:
        raise ValidationError("config key 'workers' must be at least 1")
    cfg = RunConfig(values, source, explicit)
    # building the models runs their own validation
    cfg.window(), cfg.vertex_model(), cfg.edge_model(), cfg.metric()
    return cfg


def parse_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
                 ) -> RunConfig:
    """Read a TOML file (duplicate keys are a parse error) and apply dotted overrides."""
    doc: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"config parse error in {path}: {exc}") from None
    for dotted, val in (overrides or {}).items():
        if val is None:
            continue
        sec, _, key = dotted.rpartition(".")
        if sec:
            doc.setdefault(sec, {})[key] = val
        else:
            doc[key] = val
    return resolve_config(doc, path)


# -- output helpers ----------------------------------------------------------------------

def _emit(text: str, path: str) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    try:
        return float(o)
    except (TypeError, ValueError):
        return str(o)


def _stamp(cfg: RunConfig) -> str:
    return f"# config_sha256={cfg.hash} seed={cfg.seed}\n"


def load_graph(path: str) -> SpatialGraph:
    with open(path) as fh:
        doc = json.load(fh)
    if "graphs" in doc:
        graphs = doc["graphs"]
        if len(graphs) != 1:
            raise ValidationError(f"{path} holds {len(graphs)} graphs, expected one")
        return SpatialGraph.from_dict(graphs[0])
    return SpatialGraph.from_dict(doc)


def load_sample(path: str) -> List[SpatialGraph]:
    with open(path) as fh:
        doc = json.load(fh)
    if "graphs" in doc:
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError("unsupported sample schema_version")
        return [SpatialGraph.from_dict(g) for g in doc["graphs"]]
    return [SpatialGraph.from_dict(doc)]


def sample_document(graphs: Sequence[SpatialGraph], cfg: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "config_sha256": cfg.hash, "seed": cfg.seed,
            "graphs": [g.to_dict() for g in graphs]}


# -- subcommands -------------------------------------------------------------------------

def _metric_from_args(args) -> GospaParams:
    return GospaParams.make(args.cv, args.ce, args.variant, args.edge_metric, args.exact_limit)


def cmd_sample(args, cfg: RunConfig) -> int:
    g = RngStream(cfg.seed).generator()
    graphs = sample_rgg_batch(cfg.vertex_model(), cfg.edge_model(), cfg["sample"]["n"], g)
    _emit(_json(sample_document(graphs, cfg)), cfg[""]["output"])
    return EXIT_OK


def _start(cfg: RunConfig, g) -> SpatialGraph:
    if cfg["gbdp"]["start"] == "empty":
        return empty_graph(cfg.window().dim)
    return sample_rgg_batch(cfg.vertex_model(), cfg.edge_model(), 1, g)[0]


def cmd_gbdp(args, cfg: RunConfig) -> int:
    g = RngStream(cfg.seed).generator()
    start = _start(cfg, g)
    traj = run_gbdp(cfg.vertex_model(), cfg.edge_model(), start, cfg["gbdp"]["horizon"], g,
                    spec=cfg.quadrature())
    _emit(_stamp(cfg) + traj.to_csv(), cfg[""]["output"])
    return EXIT_OK


def cmd_couple(args, cfg: RunConfig) -> int:
    """Coupled run from a stationary draw (copy A) and the empty graph (copy B)."""
    g = RngStream(cfg.seed).generator()
    vm, em = cfg.vertex_model(), cfg.edge_model()
    a = sample_rgg_batch(vm, em, 1, g)[0]
    b = empty_graph(cfg.window().dim)
    traj = run_coupled_gbdp(vm, em, a, b, cfg["gbdp"]["horizon"], g, spec=cfg.quadrature())
    _emit(_stamp(cfg) + traj.to_csv(), cfg[""]["output"])
    ct = traj.coupling_time
    print(f"coupling_time={float(ct)!r}" if ct is not None else "coupling_time=censored",
          file=sys.stderr)
    return EXIT_OK


def cmd_gospa(args, cfg: Optional[RunConfig]) -> int:
    params = _metric_from_args(args)
    val, exact = gospa_result(load_graph(args.graph_a), load_graph(args.graph_b), params)
    print(repr(val) if exact else f"{val!r} (upper bound)")
    return EXIT_OK


def cmd_wasserstein(args, cfg: Optional[RunConfig]) -> int:
    params = _metric_from_args(args)
    est = empirical_wasserstein(load_sample(args.sample_a), load_sample(args.sample_b), params,
                                method=args.method, reg=args.reg)
    flag = " (upper bound)" if est.upper_bound else ""
    print(f"{est.value!r}{flag}")
    return EXIT_OK


def cmd_bound(args, cfg: Optional[RunConfig]) -> int:
    kind = args.bound
    if kind == "stein-factors":
        params = GospaParams.make(args.cv, args.ce, args.variant)
        print(f"c_V={stein_factor_vertex(args.Lambda, params)!r}")
        print(f"c_E={stein_factor_edge(args.Lambda, args.ce)!r}")
    elif kind == "bstar":
        n_star = math.inf if args.n_star in ("inf", "infinity") else None
        if n_star is None:
            n_star = default_n_star(args.epsilon, args.c) if args.n_star == "auto" \
                else _positive_int(args.n_star)
        val = coupling_bound_bstar(args.epsilon, args.c, n_star, args.infinite_form)
        print(f"B_star={val!r}")
    elif kind == "glauber":
        print(f"expected_coupling_time={glauber_expected_coupling_time(args.n, args.m)!r}")
    elif kind == "pip":
        consts = pip_coupling_constants(cfg.vertex_model(), cfg.quadrature())
        _emit(_json({"schema_version": SCHEMA_VERSION, "config_sha256": cfg.hash, **consts}),
              cfg[""]["output"])
    elif kind == "boolean":
        bcfg = cfg.boolean()
        reports = [boolean_bound(bcfg, r, cfg.metric()).to_dict() for r in bcfg.r_list]
        _emit(_json({"schema_version": SCHEMA_VERSION, "config_sha256": cfg.hash,
                     "reports": reports}), cfg[""]["output"])
    return EXIT_OK


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise ValidationError(f"n_star must be an integer, 'auto' or 'inf', got {text!r}") \
            from None
    if v < 1:
        raise ValidationError("n_star must be positive")
    return v


def cmd_experiment(args, cfg: RunConfig) -> int:
    exp = args.experiment
    ex = cfg["experiment"]
    workers = cfg[""]["workers"]
    if exp == "boolean":
        table = run_boolean_experiment(cfg.boolean(), cfg.metric(), cfg.seed,
                                       null_reps=ex["null_reps"], workers=workers)
    elif exp == "discretisation":
        table = run_discretisation_experiment(cfg.vertex_model(), cfg.edge_model(),
                                              cfg["discretisation"]["grids"], cfg.metric(),
                                              cfg.seed, n_samples=ex["n_samples"],
                                              null_reps=ex["null_reps"], workers=workers)
    elif exp == "soft-rgg":
        s = cfg["soft_rgg"]
        table = run_soft_rgg_experiment(s["lambda2"], s["kappa2"], s["lambda_steps"],
                                        s["kappa_steps"], cfg.metric(), cfg.seed,
                                        n_samples=ex["n_samples"], null_reps=ex["null_reps"],
                                        window=cfg.window(), workers=workers)
    else:
        table = glauber_table(cfg)
    # the table config is the full run configuration so reruns can be matched by hash
    table.config = cfg.to_dict()
    _emit(table.to_csv(), cfg[""]["output"])
    return EXIT_OK


def glauber_table(cfg: RunConfig) -> ResultsTable:
    rows = []
    reps = cfg["glauber"]["reps"]
    for i, n in enumerate(int(v) for v in cfg["glauber"]["n"]):
        for m in range(1, n + 1):
            tau = simulate_glauber_coupling(n, m, reps, cfg.seed * 1_000 + 10 * i + m)
            mean = float(tau.mean())
            se = float(tau.std(ddof=1) / math.sqrt(reps))
            exact = glauber_expected_coupling_time(n, m)
            rows.append({"n": n, "m": m, "mean_tau": mean, "se": se, "expected": exact,
                         "rel_error": abs(mean - exact) / exact})
    return ResultsTable(["n", "m", "mean_tau", "se", "expected", "rel_error"], rows,
                        cfg.to_dict())


# -- argument parsing --------------------------------------------------------------------

def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="overrides the config seed (default 0)")
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    p.add_argument("--workers", type=int, help="worker threads for sweeps (default 1)")


def _add_metric_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cv", type=float, default=1.0, help="vertex cap C_V (default 1)")
    p.add_argument("--ce", type=float, default=1.0, help="edge cost C_E (default 1)")
    p.add_argument("--variant", type=int, default=1, choices=(1, 2),
                   help="GOSPA variant (default 1)")
    p.add_argument("--edge-metric", default="indicator",
                   choices=("indicator", "endpoint-aware"), help="default indicator")
    p.add_argument("--exact-limit", type=int, default=7,
                   help="largest size optimised exactly (default 7)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rggstein",
        description="Spatial random graph simulation and distance-bound verification.",
        epilog="Exit codes: 0 success, 2 invalid input, 3 numerical failure.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample random geometric graphs to JSON")
    _add_run_options(p)
    p.add_argument("--n", type=int, help="number of graphs (default 1)")

    p = sub.add_parser("gbdp", help="simulate a graph birth-death trajectory to CSV")
    _add_run_options(p)
    p.add_argument("--horizon", type=float, help="time horizon (default 10)")

    p = sub.add_parser("couple", help="simulate a coupled pair of trajectories to CSV")
    _add_run_options(p)
    p.add_argument("--horizon", type=float, help="time horizon (default 10)")

    p = sub.add_parser("gospa", help="GOSPA distance between two graph JSON files")
    p.add_argument("graph_a")
    p.add_argument("graph_b")
    _add_metric_options(p)

    p = sub.add_parser("wasserstein", help="empirical distance between two JSON samples")
    p.add_argument("sample_a")
    p.add_argument("sample_b")
    _add_metric_options(p)
    p.add_argument("--method", default="exact-ot", choices=("exact-ot", "sinkhorn"))
    p.add_argument("--reg", type=float, default=0.0, help="Sinkhorn regularisation")

    p = sub.add_parser("bound", help="evaluate closed-form bounds")
    bsub = p.add_subparsers(dest="bound", required=True)
    q = bsub.add_parser("stein-factors", help="c_V and c_E at total intensity Lambda")
    q.add_argument("--lambda", dest="Lambda", type=float, required=True)
    q.add_argument("--cv", type=float, default=1.0)
    q.add_argument("--ce", type=float, default=1.0)
    q.add_argument("--variant", type=int, default=1, choices=(1, 2))
    q = bsub.add_parser("bstar", help="coupling-time bound B*(epsilon, c, n*)")
    q.add_argument("--epsilon", type=float, required=True)
    q.add_argument("--c", type=float, required=True)
    q.add_argument("--n-star", default="auto", help="integer, 'inf' or 'auto' = ceil(c/eps)")
    q.add_argument("--infinite-form", default="log", choices=("log", "exp"))
    q = bsub.add_parser("glauber", help="expected Glauber coupling time n*H_m")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--m", type=int, required=True)
    q = bsub.add_parser("pip", help="epsilon, c, n* and B* for the configured vertex model")
    _add_run_options(q)
    q = bsub.add_parser("boolean", help="Boolean percolation bound over the r sweep")
    _add_run_options(q)

    p = sub.add_parser("experiment", help="run a reproducible experiment to CSV")
    p.add_argument("experiment", choices=("boolean", "discretisation", "soft-rgg", "glauber"))
    _add_run_options(p)
    return ap


def _overrides(args) -> Dict[str, Any]:
    out = {"seed": getattr(args, "seed", None), "output": getattr(args, "output", None),
           "workers": getattr(args, "workers", None)}
    if getattr(args, "n", None) is not None and args.command == "sample":
        out["sample.n"] = args.n
    if getattr(args, "horizon", None) is not None:
        out["gbdp.horizon"] = args.horizon
    return out


COMMANDS = {"sample": cmd_sample, "gbdp": cmd_gbdp, "couple": cmd_couple, "gospa": cmd_gospa,
            "wasserstein": cmd_wasserstein, "bound": cmd_bound, "experiment": cmd_experiment}
NEEDS_CONFIG = {"sample", "gbdp", "couple", "experiment"}


def dispatch(args: argparse.Namespace) -> int:
    try:
        cfg = None
        if args.command in NEEDS_CONFIG or getattr(args, "bound", None) in ("pip", "boolean"):
            cfg = parse_config(getattr(args, "config", None), _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except (ValidationError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    return dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
