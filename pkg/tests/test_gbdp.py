import math

import numpy as np
import pytest
from scipy import stats

from conftest import random_graph
from rggstein.core import QuadratureSpec, ValidationError
from rggstein.gbdp import (coupling_times, generator_apply, graph_difference, jump_rate,
                           marginal_check, run_coupled_gbdp, run_gbdp, sample_marginals,
                           stationarity_functionals)
from rggstein.graph import EdgeModel, SpatialGraph, empty_graph, sample_rgg_batch
from rggstein.point_process import GibbsModel


def _two_vertex(edge: bool) -> SpatialGraph:
    return SpatialGraph([[0.2, 0.2], [0.7, 0.6]], [(0, 1)] if edge else [])


class TestRunGbdp:
    def test_transient_count_law(self, unit2, rng):
        # from empty, the vertex count at time T is Poisson(L (1 - e^-T))
        lam, T = 6.0, 0.7
        vm, em = GibbsModel.poisson(unit2, lam), EdgeModel.constant(0.3)
        n = np.array([run_gbdp(vm, em, empty_graph(), T, rng).final.n_vertices
                      for _ in range(3000)])
        mean = lam * -math.expm1(-T)
        assert abs(n.mean() - mean) < 4 * math.sqrt(mean / len(n))
        assert n.var() == pytest.approx(mean, rel=0.1)

    def test_edge_count_given_vertices(self, unit2, rng):
        vm, em = GibbsModel.poisson(unit2, 8.0), EdgeModel.constant(0.4)
        k, e = [], []
        for _ in range(1500):
            g = run_gbdp(vm, em, empty_graph(), 6.0, rng).final
            k.append(g.n_vertices)
            e.append(g.n_edges)
        k, e = np.array(k), np.array(e)
        pairs = k * (k - 1) / 2
        assert abs((e - 0.4 * pairs).mean()) < 4 * np.sqrt(0.24 * pairs).mean() / math.sqrt(len(k))

    def test_hard_core_respected(self, unit2, rng):
        vm = GibbsModel.hard_core(unit2, 60.0, 0.12)
        g = run_gbdp(vm, EdgeModel.constant(0.5), empty_graph(), 5.0, rng).final
        D = np.linalg.norm(g.points[:, None] - g.points[None], axis=2) + np.eye(g.n_vertices)
        assert g.n_vertices > 5 and D.min() > 0.12

    def test_absorbing_state(self, unit2, rng):
        tr = run_gbdp(GibbsModel.poisson(unit2, 0.0), EdgeModel.constant(0.5), empty_graph(),
                      1.0, rng)
        assert tr.absorbed and tr.final.n_vertices == 0

    def test_trajectory_consistency_and_csv(self, unit2, rng):
        tr = run_gbdp(GibbsModel.poisson(unit2, 4.0), EdgeModel.constant(0.5), empty_graph(),
                      3.0, rng, record_times=[1.0, 2.0])
        assert np.all(np.diff(tr.times) > 0) and tr.times[-1] <= 3.0
        assert np.all(np.abs(np.diff(tr.n_vertices)) == 1)
        assert set(tr.snapshots) == {1.0, 2.0}
        lines = tr.to_csv().splitlines()
        assert lines[0] == "time,graph_id,n_vertices,n_edges,coupled_flag"
        assert len(lines) == len(tr.times) + 1 and "np." not in lines[1]

    def test_reproducible(self, unit2):
        vm, em = GibbsModel.strauss(unit2, 10.0, 0.5, 0.1), EdgeModel.exponential(0.7, 0.3)
        a = run_gbdp(vm, em, empty_graph(), 2.0, 11)
        b = run_gbdp(vm, em, empty_graph(), 2.0, 11)
        assert a.to_csv() == b.to_csv() and a.final == b.final

    def test_boolean_kernel_rejected(self, unit2):
        em = EdgeModel.boolean(lambda g, n: np.ones(n))
        with pytest.raises(ValidationError, match="influence condition"):
            run_gbdp(GibbsModel.poisson(unit2, 1.0), em, empty_graph(), 1.0)

    def test_negative_horizon(self, unit2):
        with pytest.raises(ValidationError):
            run_gbdp(GibbsModel.poisson(unit2, 1.0), EdgeModel.constant(0.5), empty_graph(), -1)


def test_jump_rate(unit2):
    assert jump_rate(GibbsModel.poisson(unit2, 3.0), [[0.5, 0.5]]) == 4.0
    hc = GibbsModel.hard_core(unit2, 3.0, 0.1)
    rate = jump_rate(hc, [[0.5, 0.5]], QuadratureSpec(resolution=400))
    assert rate == pytest.approx(1 + 3.0 * (1 - math.pi * 0.01), rel=1e-3)


class TestCoupling:
    def test_pure_edge_difference_is_exp2(self, unit2, rng):
        vm, em = GibbsModel.poisson(unit2, 3.0), EdgeModel.constant(0.5)
        t, cens = coupling_times(vm, em, _two_vertex(True), _two_vertex(False), 3000, 50.0, rng)
        assert cens == 0
        assert stats.kstest(t, stats.expon(scale=0.5).cdf).pvalue > 1e-3

    def test_single_extra_vertex_poisson_is_exp1(self, unit2, rng):
        vm, em = GibbsModel.poisson(unit2, 3.0), EdgeModel.constant(0.5)
        a = _two_vertex(True)
        b = SpatialGraph([[0.2, 0.2]])
        t, _ = coupling_times(vm, em, a, b, 3000, 50.0, rng)
        assert stats.kstest(t, stats.expon().cdf).pvalue > 1e-3

    def test_coupled_copies_stay_equal(self, unit2, rng):
        vm, em = GibbsModel.strauss(unit2, 20.0, 0.3, 0.1), EdgeModel.constant(0.5)
        tr = run_coupled_gbdp(vm, em, _two_vertex(True), _two_vertex(False), 20.0, rng)
        assert tr.is_coupled
        k = int(np.argmax(tr.coupled))
        assert tr.coupled[k:].all()
        assert tr.final_a == tr.final_b

    def test_identical_start_coupled_at_zero(self, unit2, rng):
        g = random_graph(rng, 4)
        tr = run_coupled_gbdp(GibbsModel.poisson(unit2, 1.0), EdgeModel.constant(0.5), g, g, 1.0,
                              rng)
        assert tr.coupling_time == 0.0

    def test_censoring_counted(self, unit2, rng):
        vm, em = GibbsModel.poisson(unit2, 1.0), EdgeModel.constant(0.5)
        t, cens = coupling_times(vm, em, _two_vertex(True), _two_vertex(False), 200, 1e-3, rng)
        assert cens > 150 and np.all(t <= 1e-3)

    def test_csv_two_rows_per_time(self, unit2, rng):
        tr = run_coupled_gbdp(GibbsModel.poisson(unit2, 2.0), EdgeModel.constant(0.5),
                              _two_vertex(True), _two_vertex(False), 2.0, rng)
        assert len(tr.to_csv().splitlines()) == 2 * len(tr.times) + 1

    def test_marginals_match_direct_runs(self, unit2, rng):
        vm, em = GibbsModel.hard_core(unit2, 10.0, 0.1), EdgeModel.threshold(0.4, 0.8)
        cpl, drc = sample_marginals(vm, em, _two_vertex(True), SpatialGraph([[0.5, 0.5]]),
                                    [0.5, 2.0], 600, rng)
        assert marginal_check(cpl, drc).min_p > 1e-3


class TestGraphDifference:
    def test_examples(self):
        a, b = _two_vertex(True), _two_vertex(False)
        assert graph_difference(a, b) == 2
        assert graph_difference(a, a) == 0
        assert graph_difference(a, SpatialGraph([[0.2, 0.2]])) == 1
        c = SpatialGraph([[0.2, 0.2], [0.7, 0.6], [0.1, 0.9]], [(0, 1), (1, 2)])
        assert graph_difference(a, c) == 1

    def test_symmetric(self, rng):
        for _ in range(50):
            a, b = random_graph(rng, 5), random_graph(rng, 4)
            assert graph_difference(a, b) == graph_difference(b, a)


class TestGenerator:
    def test_vertex_count_closed_form(self, unit2, rng):
        vm, em = GibbsModel.poisson(unit2, 5.0), EdgeModel.constant(0.5)
        g = random_graph(rng, 3)
        val = generator_apply(vm, em, lambda P, A: float(len(P)), g, rng=rng)
        assert val == pytest.approx(5.0 - 3.0)

    def test_stationary_mean_zero(self, unit2, rng):
        vm, em = GibbsModel.poisson(unit2, 4.0), EdgeModel.exponential(0.8, 0.3)
        graphs = sample_rgg_batch(vm, em, 1500, rng)
        for name, h in stationarity_functionals(unit2).items():
            vals = np.array([generator_apply(vm, em, h, G, rng=rng) for G in graphs])
            se = vals.std(ddof=1) / math.sqrt(len(vals))
            assert abs(vals.mean()) <= 4 * se + 1e-12, name

    def test_detects_wrong_law(self, unit2, rng):
        vm, em = GibbsModel.poisson(unit2, 4.0), EdgeModel.constant(0.5)
        graphs = sample_rgg_batch(GibbsModel.poisson(unit2, 6.0), em, 800, rng)
        vals = np.array([generator_apply(vm, em, lambda P, A: float(len(P)), G, rng=rng)
                         for G in graphs])
        assert vals.mean() < -4 * vals.std(ddof=1) / math.sqrt(len(vals))
