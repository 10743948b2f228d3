"""End-to-end acceptance checks.

Each test records one ``CRITERION n: PASS|FAIL ...`` line (shown in the
terminal summary) and then asserts it.  Runtime budgets are part of the
criterion.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES, metric_params, random_graph
from rggstein.boolean import BooleanConfig
from rggstein.bounds import (coupling_bound_bstar, default_n_star, glauber_expected_coupling_time,
                             pip_epsilon, stein_factor_edge, stein_factor_vertex)
from rggstein.cli import main as cli_main
from rggstein.core import RngStream, Window
from rggstein.experiments import (run_boolean_experiment, run_discretisation_experiment,
                                  run_soft_rgg_experiment, simulate_glauber_coupling)
from rggstein.gbdp import (coupling_times, generator_apply, marginal_check, run_gbdp,
                           sample_marginals, stationarity_functionals)
from rggstein.gospa import GospaParams, gospa, gospa_bruteforce
from rggstein.graph import (EdgeModel, SpatialGraph, empty_graph, graph_gnz_suite_residuals,
                            graph_gnz_test_suite, sample_rgg_batch)
from rggstein.point_process import (GibbsModel, PointPattern, gnz_suite_residuals,
                                    gnz_test_suite, sample_poisson)
from test_bounds import bstar_oracle

T_ONE_SIDED_99 = stats.norm.ppf(0.99)


class Criterion:
    def __init__(self, number: int, budget: float):
        self.number, self.budget = number, budget
        self.checks = []

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def check(self, name: str, ok: bool, detail: str = ""):
        self.checks.append((name, bool(ok), detail))

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        self.check("runtime", elapsed < self.budget, f"{elapsed:.1f}s < {self.budget:g}s")
        failed = [c for c in self.checks if not c[1]]
        ok = exc_type is None and not failed
        parts = "; ".join(f"{n}={'ok' if o else 'FAIL'}" + (f" ({d})" if d else "")
                          for n, o, d in self.checks)
        if exc_type is not None:
            parts += f"; error={exc_type.__name__}: {exc}"
        ACCEPTANCE_LINES.append(f"CRITERION {self.number}: {'PASS' if ok else 'FAIL'} | {parts}")
        print(ACCEPTANCE_LINES[-1])
        return False

    def assert_all(self):
        bad = [c for c in self.checks if not c[1]]
        assert not bad, bad


def test_criterion_01_stein_factors():
    with Criterion(1, 1.0) as c:
        p = GospaParams.make(1.0, 1.0, 1)
        ce = stein_factor_edge(1.0)
        e = math.exp(-1.0)
        second = (2 - e) - (1.5 - e)
        c.check("c_E(1)=1/4", ce == 0.25 and abs(second - 0.5) < 1e-15, f"{ce!r}")
        cv = stein_factor_vertex(1.0, p)
        c.check("c_V(1)=1.5", cv == 1.5, f"{cv!r}")
        lams = [10.0 ** k for k in range(1, 7)]
        vs = [stein_factor_vertex(L, p) for L in lams]
        es = [stein_factor_edge(L) for L in lams]
        c.check("decay", all(np.diff(vs) < 0) and all(np.diff(es) < 0)
                and vs[-1] < 1e-4 and es[-1] < 1e-5, f"c_V(1e6)={vs[-1]:.2e}, c_E(1e6)={es[-1]:.2e}")
    c.assert_all()


def test_criterion_02_bstar():
    with Criterion(2, 5.0) as c:
        worst = 0.0
        for eps in (0.05, 0.2, 0.5, 0.9, 1.5):
            for cc in (0.1, 1.0, 3.0, 10.0, 25.0):
                for n in (1, 3, 10):
                    want = float(bstar_oracle(eps, cc, n))
                    worst = max(worst, abs(coupling_bound_bstar(eps, cc, n) - want) / want)
        c.check("oracle 5x5x3", worst <= 1e-10, f"max rel err {worst:.1e}")
        lim = max(abs(coupling_bound_bstar(1e-15, cc, n) - 1.0) for cc in (0.5, 5.0) for n in (2, 6))
        c.check("eps->0", lim <= 1e-12 and coupling_bound_bstar(0.0, 2.0, 4) == 1.0, f"{lim:.1e}")
        rb = coupling_bound_bstar(0.5, 1.0, math.inf)
        c.check("3 log 2", abs(rb - 3 * math.log(2)) <= 1e-12 * 3 * math.log(2), f"{rb!r}")
    c.assert_all()


def test_criterion_03_gospa():
    with Criterion(3, 60.0) as c:
        g = RngStream(3).generator()
        worst, sym_ok, cap_ok = 0.0, True, True
        for _ in range(10_000):
            params = metric_params(g)
            a = random_graph(g, int(g.integers(0, 8)), p=g.random(), spread=1.5)
            b = random_graph(g, int(g.integers(0, 8)), p=g.random(), spread=1.5)
            v = gospa(a, b, params)
            worst = max(worst, abs(v - gospa_bruteforce(a, b, params)))
            sym_ok &= v == gospa(b, a, params)
            cap_ok &= v <= params.cap() + 1e-15
        c.check("oracle 1e4 pairs", worst <= 1e-12, f"max |diff| {worst:.1e}")
        c.check("symmetry", sym_ok)
        c.check("caps", cap_ok)
        tri = 0.0
        for _ in range(10_000):
            params = metric_params(g)
            x, y, z = (random_graph(g, int(g.integers(0, 6)), p=g.random()) for _ in range(3))
            tri = max(tri, gospa(x, z, params) - gospa(x, y, params) - gospa(y, z, params))
        c.check("triangle 1e4", tri <= 1e-9, f"max excess {tri:.1e}")
        pen_ok = True
        for variant in (1, 2):
            params = GospaParams.make(0.8, 0.6, variant)
            for m in range(2, 8):
                b = random_graph(g, m, p=0.6)
                keep = np.arange(m - 1)
                a = SpatialGraph.from_adjacency(PointPattern(b.points[keep]),
                                                b.adjacency()[np.ix_(keep, keep)])
                deg = int(b.adjacency()[m - 1].sum())
                want = params.penalty(1) / m if variant == 1 else (0.8 + 0.6 + deg * 0.6 / (m - 1)) / m
                pen_ok &= abs(gospa(a, b, params) - want) <= 1e-15
        c.check("size-diff-one penalties", pen_ok)
    c.assert_all()


def test_criterion_04_gnz():
    with Criterion(4, 90.0) as c:
        w = Window.unit(2)
        em = EdgeModel.threshold(0.2, 0.7)
        psuite, gsuite = gnz_test_suite(w), graph_gnz_test_suite(w)
        for name, vm in (("poisson", GibbsModel.poisson(w, 5.0)),
                         ("hard-core", GibbsModel.hard_core(w, 20.0, 0.08))):
            g = RngStream(40).child(len(name)).generator()
            graphs = sample_rgg_batch(vm, em, 10_000, g)
            prep = gnz_suite_residuals(vm, psuite, 0, g, samples=[G.points for G in graphs])
            grep = graph_gnz_suite_residuals(vm, em, gsuite, 0, g, samples=graphs)
            for kind, reps in (("point", prep), ("graph", grep)):
                worst = max(abs(r.residual) / r.std_error if r.std_error > 0 else
                            (0.0 if r.residual == 0 else math.inf) for r in reps.values())
                c.check(f"{name}/{kind}", all(r.within(3) for r in reps.values()),
                        f"max |res|/se {worst:.2f}")
    c.assert_all()


def test_criterion_05_gbdp_stationarity():
    with Criterion(5, 180.0) as c:
        w = Window.unit(2)
        vm, em = GibbsModel.poisson(w, 5.0), EdgeModel.exponential(0.8, 0.3)
        g = RngStream(5).generator()
        chain = [run_gbdp(vm, em, empty_graph(), 20.0, g).final.n_vertices for _ in range(1000)]
        exact = [len(sample_poisson(vm, g)) for _ in range(1000)]
        ks = stats.ks_2samp(chain, exact).statistic
        crit = 1.358 * math.sqrt(2 / 1000)
        c.check("KS vertex counts", ks < crit, f"D={ks:.4f} < {crit:.4f}")
        graphs = sample_rgg_batch(vm, em, 2000, g)
        for name, h in stationarity_functionals(w).items():
            vals = np.array([generator_apply(vm, em, h, G, rng=g) for G in graphs])
            se = vals.std(ddof=1) / math.sqrt(len(vals))
            c.check(f"E[Gh] {name}", abs(vals.mean()) <= 3 * se, f"{vals.mean():.3f} (se {se:.3f})")
    c.assert_all()


def test_criterion_06_coupling_laws():
    with Criterion(6, 300.0) as c:
        w = Window.unit(2)
        root = RngStream(6)
        two = SpatialGraph([[0.2, 0.2], [0.7, 0.6]], [(0, 1)])
        two_plain = SpatialGraph([[0.2, 0.2], [0.7, 0.6]])
        poi, em = GibbsModel.poisson(w, 3.0), EdgeModel.constant(0.5)
        t, cens = coupling_times(poi, em, two, two_plain, 10_000, 100.0, root.child(0).generator())
        se = t.std(ddof=1) / math.sqrt(len(t))
        c.check("edge difference mean 0.5", abs(t.mean() - 0.5) <= 3 * se and cens == 0,
                f"{t.mean():.4f} +- {se:.4f}")
        one = SpatialGraph([[0.2, 0.2]])
        t, cens = coupling_times(poi, em, two, one, 10_000, 100.0, root.child(1).generator())
        se = t.std(ddof=1) / math.sqrt(len(t))
        c.check("extra vertex mean <= 1", t.mean() - T_ONE_SIDED_99 * se <= 1.0,
                f"{t.mean():.4f} +- {se:.4f}")
        hc = GibbsModel.hard_core(w, 8.0, 0.1)
        eps, cpip = pip_epsilon(hc), hc.total_beta()
        bstar = coupling_bound_bstar(eps, cpip, default_n_star(eps, cpip))
        t, cens = coupling_times(hc, em, two, one, 4000, 200.0, root.child(2).generator())
        se = t.std(ddof=1) / math.sqrt(len(t))
        c.check("PIP mean <= B*", t.mean() - T_ONE_SIDED_99 * se <= bstar,
                f"{t.mean():.4f} +- {se:.4f} vs B*={bstar:.4f}, censored {cens}")
        cpl, drc = sample_marginals(hc, EdgeModel.threshold(0.3, 0.8), two, one,
                                    [0.25, 0.5, 1.0, 2.0, 4.0], 1000, root.child(3).generator())
        rep = marginal_check(cpl, drc)
        c.check("marginals", len(rep.statistics) == 10 and rep.min_p > 1e-3,
                f"min p {rep.min_p:.3f} over {len(rep.statistics)}")
    c.assert_all()


def test_criterion_07_glauber():
    with Criterion(7, 120.0) as c:
        worst = 0.0
        for n in range(4, 9):
            for m in range(1, n + 1):
                tau = simulate_glauber_coupling(n, m, 100_000, 70 + 10 * n + m)
                exact = glauber_expected_coupling_time(n, m)
                worst = max(worst, abs(tau.mean() - exact) / exact)
        c.check("n=4..8, all m", worst <= 0.02, f"max rel err {worst:.4f}")
    c.assert_all()


def test_criterion_08_soft_rgg():
    with Criterion(8, 600.0) as c:
        t = run_soft_rgg_experiment(5.0, 0.5, [0.0, 0.25, 0.5], [0.0, 0.05, 0.1], GospaParams(),
                                    seed=8, n_samples=300, null_reps=50)
        c.check("W_hat <= bound + band (9 points)", all(t.column("within")),
                f"{int(np.sum(t.column('within')))}/9")
        c.check("sup-norm gaps (20 functionals)", all(t.column("sup_within")),
                f"max excess {max(t.column('max_gap_excess')):.4f}")
    c.assert_all()


def test_criterion_09_boolean():
    with Criterion(9, 600.0) as c:
        r_list = tuple(np.logspace(4, 5, 4))
        cache = {}
        for gamma in (0.3, 0.5, 0.7):
            cfg = BooleanConfig(gamma=gamma, r_list=r_list, n_samples=300)
            t = run_boolean_experiment(cfg, GospaParams(), seed=9, null_reps=50, band_cache=cache)
            within = all(t.column("within"))
            sb, sw = t.summary["slope_bound"], t.summary["slope_W_hat"]
            c.check(f"gamma={gamma} within", within)
            c.check(f"gamma={gamma} bound slope", abs(sb + (1 - gamma)) <= 0.05,
                    f"{sb:.4f} vs {-(1 - gamma):.2f}; W_hat slope {sw:.3f} (informational)")
    c.assert_all()


def test_criterion_10_discretisation():
    with Criterion(10, 600.0) as c:
        w = Window.unit(2)
        model = GibbsModel.soft_core_linear(w, 4.0, 0.5, 0.2)
        em = EdgeModel.exponential(0.8, 0.5)
        t = run_discretisation_experiment(model, em, [2, 4, 8, 16], GospaParams(), seed=7,
                                          n_samples=300, null_reps=50)
        sl, sw = t.summary["slope_lipschitz"], t.summary["slope_W_hat"]
        c.check("Lipschitz slope 1", abs(sl - 1.0) <= 1e-12, f"{sl!r}")
        c.check("W_hat slope 1 +- 0.2", abs(sw - 1.0) <= 0.2, f"{sw:.3f}")
        c.check("W_hat <= bound + band", all(t.column("within")))
    c.assert_all()


def test_criterion_11_reproducibility(tmp_path):
    with Criterion(11, 300.0) as c:
        cfgs = {
            "boolean": "[boolean]\nr_list = [1e4, 1e5]\n[experiment]\nn_samples = 60\nnull_reps = 20\n",
            "soft-rgg": "[experiment]\nn_samples = 60\nnull_reps = 20\n",
            "discretisation": "[vertex]\nkind = \"soft-core\"\nbeta = 4.0\nr = 0.2\n"
                              "[edge]\nkind = \"exponential\"\np = 0.8\n"
                              "[discretisation]\ngrids = [2, 4]\n"
                              "[experiment]\nn_samples = 40\nnull_reps = 20\n",
            "glauber": "[glauber]\nn = [4, 5]\nreps = 5000\n",
        }
        for name, text in cfgs.items():
            path = tmp_path / f"{name}.toml"
            path.write_text(text)
            outs = []
            for run, workers in enumerate((1, 1, 3)):
                out = tmp_path / f"{name}-{run}.csv"
                code = cli_main(["experiment", name, "--config", str(path), "--seed", "7",
                                 "--workers", str(workers), "-o", str(out)])
                outs.append(out.read_bytes() if code == 0 else None)
            same = outs[0] is not None and outs.count(outs[0]) == 3
            c.check(name, same, "identical bytes over 2 reruns and 3 workers")
    c.assert_all()
