import math

import numpy as np
import pytest

from conftest import random_graph
from rggstein.core import ValidationError, Window
from rggstein.graph import (EdgeModel, SpatialGraph, empty_graph, graph_gnz_residual,
                            graph_gnz_suite_residuals, graph_gnz_test_suite, same_graph,
                            sample_edges, sample_edges_to_new_vertex, sample_rgg,
                            sample_rgg_batch)
from rggstein.point_process import GibbsModel, PointPattern


def square_pair_measure(r: float) -> float:
    """Lebesgue measure of {(x, y) in [0,1]^4 : |x - y| <= r} for r <= 1."""
    return math.pi * r ** 2 - 8.0 / 3.0 * r ** 3 + 0.5 * r ** 4


class TestSpatialGraph:
    def test_invalid_edges(self):
        pts = [[0.0, 0.0], [1.0, 1.0]]
        for edges in ([(0, 0)], [(0, 2)], [(0, 1), (1, 0)]):
            with pytest.raises(ValidationError):
                SpatialGraph(pts, edges)

    def test_adjacency_symmetric_read_only(self, rng):
        g = random_graph(rng, 6)
        A = g.adjacency()
        assert np.array_equal(A, A.T) and not A.diagonal().any()
        assert A.sum() == 2 * g.n_edges
        with pytest.raises(ValueError):
            A[0, 1] = True

    def test_json_round_trip(self, rng):
        for n in (0, 1, 5):
            g = random_graph(rng, n, d=3)
            assert SpatialGraph.from_json(g.to_json()) == g

    def test_json_schema_version_checked(self, rng):
        doc = random_graph(rng, 3).to_dict()
        doc["schema_version"] = 99
        with pytest.raises(ValidationError):
            SpatialGraph.from_dict(doc)

    def test_csv_round_trip(self, rng):
        g = random_graph(rng, 8)
        assert SpatialGraph.from_csv_pair(*g.to_csv_pair()) == g

    def test_same_graph_ignores_labels(self):
        a = SpatialGraph([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [(0, 1)])
        b = SpatialGraph([[0.0, 1.0], [0.0, 0.0], [1.0, 0.0]], [(1, 2)])
        c = SpatialGraph([[0.0, 1.0], [0.0, 0.0], [1.0, 0.0]], [(0, 2)])
        assert same_graph(a, b) and not same_graph(a, c)

    def test_empty(self):
        g = empty_graph(3)
        assert g.n_vertices == 0 and g.dim == 3 and g.n_edges == 0


class TestEdgeModels:
    def test_invalid_probability(self):
        with pytest.raises(ValidationError, match="invalid connection probability"):
            EdgeModel.constant(1.2)
        bad = EdgeModel("product", lambda X, Y: np.full((len(X), len(Y)), 1.5))
        with pytest.raises(ValidationError, match="invalid connection probability"):
            bad.probabilities(np.zeros((1, 2)), np.ones((1, 2)))

    def test_boolean_kind_has_no_kernel(self):
        m = EdgeModel.boolean(lambda g, n: np.ones(n))
        with pytest.raises(ValidationError, match="influence condition"):
            m.probabilities(np.zeros((1, 2)), np.ones((1, 2)))

    def test_binomial_edge_count(self, rng):
        m = EdgeModel.constant(0.5)
        xi = rng.random((10, 2))
        counts = np.array([len(sample_edges(m, xi, rng)) for _ in range(10_000)])
        se = math.sqrt(45 * 0.25 / len(counts))
        assert abs(counts.mean() - 22.5) < 3 * se

    def test_threshold_is_deterministic(self, rng):
        m = EdgeModel.threshold(0.3)
        xi = rng.random((12, 2))
        x = np.array([0.5, 0.5])
        edges = sample_edges_to_new_vertex(m, xi, x, rng)
        near = set(np.nonzero(np.linalg.norm(xi - x, axis=1) <= 0.3)[0].tolist())
        assert {j for j, _ in edges} == near
        assert all(n == 12 for _, n in edges)

    def test_duplicate_new_vertex(self, rng):
        xi = rng.random((3, 2))
        with pytest.raises(ValidationError, match="duplicate vertex"):
            sample_edges_to_new_vertex(EdgeModel.constant(0.5), xi, xi[1], rng)

    def test_exponential_lipschitz(self):
        m = EdgeModel.exponential(0.8, 0.25)
        assert m.lipschitz == pytest.approx(3.2)


class TestRgg:
    def test_mean_edge_count_threshold_kernel(self, unit2, rng):
        lam, r = 20.0, 0.15
        graphs = sample_rgg_batch(GibbsModel.poisson(unit2, lam), EdgeModel.threshold(r), 20_000,
                                  rng)
        e = np.array([g.n_edges for g in graphs])
        expected = 0.5 * lam ** 2 * square_pair_measure(r)
        assert abs(e.mean() - expected) < 4 * e.std() / math.sqrt(len(e))

    def test_boolean_latent_rule(self, rng):
        em = EdgeModel.boolean(lambda g, n: np.full(n, 0.1), scale=2.0)
        vm = GibbsModel.poisson(Window.unit(2), 30.0)
        g = sample_rgg(vm, em, rng)
        D = np.linalg.norm(g.points[:, None] - g.points[None], axis=2) * 2.0
        want = (D <= 0.2) & ~np.eye(g.n_vertices, dtype=bool)
        assert np.array_equal(g.adjacency(), want)


class TestGraphGnz:
    def test_suite_poisson(self, unit2, rng):
        reps = graph_gnz_suite_residuals(GibbsModel.poisson(unit2, 6.0),
                                         EdgeModel.exponential(0.7, 0.3),
                                         graph_gnz_test_suite(unit2), 3000, rng)
        assert reps["zero"].residual == 0.0
        assert all(r.within(4) for r in reps.values())

    def test_wrong_kernel_detected(self, unit2, rng):
        vm = GibbsModel.poisson(unit2, 8.0)
        graphs = sample_rgg_batch(vm, EdgeModel.constant(0.6), 3000, rng)
        r = graph_gnz_residual(vm, EdgeModel.constant(0.2),
                               lambda P, A, X, S: S.sum(axis=1).astype(float), 0, rng,
                               samples=graphs)
        assert not r.within(3)

    def test_needs_product_kernel(self, unit2):
        em = EdgeModel.boolean(lambda g, n: np.ones(n))
        with pytest.raises(ValidationError, match="influence condition not guaranteed"):
            graph_gnz_residual(GibbsModel.poisson(unit2, 1.0), em,
                               lambda P, A, X, S: np.zeros(len(X)), 10)
