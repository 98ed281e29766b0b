import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtfrec.filtering import (FilterConfig, FilterError, clip_prox, edge_weights,
                              gtcf_filter, gtf_objective, laplacian_propagate,
                              soft_threshold)
from gtfrec.graph import GraphError, build_incidence, build_propagation

from conftest import random_bipartite, subgradient_objective_oracle, tiny_incidence


def single_edge_op():
    _, op = tiny_incidence([(0, 0)], 1, 1)
    return op


def test_clip_prox_examples():
    assert clip_prox(np.array(0.0), 1.0) == 0.0
    assert clip_prox(np.array(0.3), 0.5) == 0.3
    assert clip_prox(np.array(-0.8), 0.5) == -0.5


def test_clip_prox_idempotent(rng):
    X = rng.standard_normal((5, 3))
    once = clip_prox(X, 0.4)
    np.testing.assert_array_equal(clip_prox(once, 0.4), once)


def test_clip_prox_negative_lambda():
    with pytest.raises(FilterError):
        clip_prox(np.zeros(2), -0.1)


def test_soft_threshold_examples():
    assert soft_threshold(np.array(0.3), 0.5) == 0.0
    assert soft_threshold(np.array(-0.8), 0.5) == pytest.approx(-0.3)
    with pytest.raises(FilterError):
        soft_threshold(np.zeros(2), -1.0)


def test_moreau_identity(rng):
    X = rng.standard_normal((20, 4)) * 2
    lam = 0.7
    np.testing.assert_allclose(clip_prox(X, lam) + soft_threshold(X, lam), X, atol=1e-12)


@given(st.floats(-10, 10), st.floats(0, 5))
@settings(max_examples=200, deadline=None)
def test_moreau_identity_scalar(x, lam):
    x = np.array(x)
    assert abs(clip_prox(x, lam) + soft_threshold(x, lam) - x) < 1e-12


def test_filter_config_validation():
    with pytest.raises(FilterError):
        FilterConfig(lam=-1.0)
    with pytest.raises(FilterError):
        FilterConfig(num_layers=-1)
    with pytest.raises(FilterError):
        FilterConfig(beta=0.0)


def test_lambda_zero_is_identity(rng):
    g = random_bipartite(rng)
    op = build_incidence(g)
    E_in = rng.standard_normal((g.num_nodes, 3))
    out = gtcf_filter(E_in, op, FilterConfig(lam=0.0, num_layers=10)).output
    np.testing.assert_array_equal(out, E_in)


def test_zero_layers_is_identity(rng):
    g = random_bipartite(rng)
    op = build_incidence(g)
    E_in = rng.standard_normal((g.num_nodes, 2))
    out = gtcf_filter(E_in, op, FilterConfig(lam=1.0, num_layers=0)).output
    np.testing.assert_array_equal(out, E_in)


def test_single_edge_fused_fixed_point():
    op = single_edge_op()
    out = gtcf_filter(np.array([[1.0], [0.0]]), op,
                      FilterConfig(lam=1.0, num_layers=200)).output
    np.testing.assert_allclose(out, [[0.5], [0.5]], atol=1e-4)


def test_single_edge_partial_fixed_point():
    op = single_edge_op()
    lam = 0.1
    out = gtcf_filter(np.array([[1.0], [0.0]]), op,
                      FilterConfig(lam=lam, num_layers=200)).output
    expected = [[1 - lam / np.sqrt(2)], [lam / np.sqrt(2)]]
    np.testing.assert_allclose(out, expected, atol=1e-4)


def test_sparsity_tendency_fused_difference():
    # above the fusion threshold the converged edge difference is exactly flat
    op = single_edge_op()
    out = gtcf_filter(np.array([[1.0], [0.0]]), op,
                      FilterConfig(lam=0.75, num_layers=2000)).output
    assert abs(op.forward(out)[0, 0]) < 1e-6


def test_objective_examples():
    op = single_edge_op()
    E_in = np.array([[1.0], [0.0]])
    assert gtf_objective(np.zeros((2, 1)), np.zeros((2, 1)), op, 1.0) == 0.0
    # E = E_in leaves only the penalty term
    pen = np.sum(np.abs(op.forward(E_in)))
    assert gtf_objective(E_in, E_in, op, 2.0) == pytest.approx(2.0 * pen)
    # converged fused optimum at lam=1
    assert gtf_objective(np.array([[0.5], [0.5]]), E_in, op, 1.0) == pytest.approx(0.25)


def test_objective_shape_mismatch():
    op = single_edge_op()
    with pytest.raises(GraphError):
        gtf_objective(np.zeros((2, 1)), np.zeros((3, 1)), op, 1.0)


def test_dual_bounded_by_lambda(rng):
    g = random_bipartite(rng)
    op = build_incidence(g)
    E_in = rng.standard_normal((g.num_nodes, 3)) * 3
    for lam in (0.1, 0.5, 2.0):
        trace = gtcf_filter(E_in, op, FilterConfig(lam=lam, num_layers=30))
        assert np.max(np.abs(trace.dual)) <= lam + 1e-15


def test_objective_monotone_to_plateau(rng):
    g = random_bipartite(rng)
    op = build_incidence(g)
    E_in = rng.standard_normal((g.num_nodes, 3))
    cfg = FilterConfig(lam=0.5, num_layers=600, record_trace=True)
    objs = gtcf_filter(E_in, op, cfg, keep_masks=False).objectives
    assert objs[499] - objs[549] < 1e-6
    assert objs[-1] <= objs[0] + 1e-12


def test_no_divergence(rng):
    for _ in range(20):
        g = random_bipartite(rng)
        op = build_incidence(g)
        E_in = rng.standard_normal((g.num_nodes, 2)) * 5
        bound = 10 * np.linalg.norm(E_in)
        cfg = FilterConfig(lam=1.0, num_layers=100, record_trace=True)
        trace = gtcf_filter(E_in, op, cfg, keep_masks=False)
        for Ebar in trace.primal_preds:
            assert np.linalg.norm(Ebar) <= bound
        assert np.linalg.norm(trace.output) <= bound


def test_matches_subgradient_oracle(rng):
    lams = [0.1, 0.5, 1.0, 2.0]
    for trial in range(8):
        g = random_bipartite(rng, max_users=8, max_items=8)
        op = build_incidence(g)
        d = int(rng.integers(1, 5))
        E_in = rng.standard_normal((g.num_nodes, d))
        lam = lams[trial % len(lams)]
        out = gtcf_filter(E_in, op, FilterConfig(lam=lam, num_layers=2000),
                          keep_masks=False).output
        ours = gtf_objective(out, E_in, op, lam)
        oracle = subgradient_objective_oracle(op.to_dense(), E_in, lam, 100_000)
        assert ours <= oracle + 1e-5


def test_general_stepsize_path_agrees(rng):
    # gamma != 1 takes the predictor-corrector path; same optimum
    g = random_bipartite(rng)
    op = build_incidence(g)
    E_in = rng.standard_normal((g.num_nodes, 2))
    ref = gtcf_filter(E_in, op, FilterConfig(lam=0.5, num_layers=3000)).output
    alt = gtcf_filter(E_in, op, FilterConfig(lam=0.5, num_layers=3000,
                                             gamma=0.5, beta=0.5)).output
    np.testing.assert_allclose(alt, ref, atol=1e-4)


def test_edge_weights_examples():
    op = single_edge_op()
    # d=1: the edge difference row is [-1/sqrt(2) * 1] for E=[1,0]
    w = edge_weights(np.array([[1.0], [0.0]]), op)
    delta = 1 / np.sqrt(2)
    assert w[0] == pytest.approx(delta / delta ** 2)
    # zero difference -> sentinel
    w0 = edge_weights(np.zeros((2, 1)), op)
    assert np.isnan(w0[0])


def test_edge_weights_formula(rng):
    g = random_bipartite(rng)
    op = build_incidence(g)
    E = rng.standard_normal((g.num_nodes, 2))
    diffs = op.forward(E)
    w = edge_weights(E, op)
    for l in range(g.num_edges):
        expected = np.sum(np.abs(diffs[l])) / np.sum(diffs[l] ** 2)
        assert w[l] == pytest.approx(expected)


def test_laplacian_propagate_cases():
    g, _ = tiny_incidence([(0, 0)], 1, 1)
    prop = build_propagation(g)
    E_in = np.array([[1.0], [0.0]])
    np.testing.assert_array_equal(laplacian_propagate(E_in, prop, 0, "last"), E_in)
    np.testing.assert_allclose(laplacian_propagate(E_in, prop, 1, "last"), [[0.5], [0.5]])
    const = np.array([[0.3], [0.3]])
    np.testing.assert_allclose(laplacian_propagate(const, prop, 4, "last"), const)
    # mean combine averages E^0..E^K
    mean = laplacian_propagate(E_in, prop, 1, "mean")
    np.testing.assert_allclose(mean, (E_in + np.array([[0.5], [0.5]])) / 2)


def test_laplacian_propagate_validation():
    g, _ = tiny_incidence([(0, 0)], 1, 1)
    prop = build_propagation(g)
    with pytest.raises(FilterError):
        laplacian_propagate(np.zeros((2, 1)), prop, -1)
    with pytest.raises(FilterError):
        laplacian_propagate(np.zeros((2, 1)), prop, 1, "sum")


def test_trace_csv_export(tmp_path, rng):
    g = random_bipartite(rng)
    op = build_incidence(g)
    cfg = FilterConfig(lam=0.5, num_layers=5, record_trace=True)
    trace = gtcf_filter(rng.standard_normal((g.num_nodes, 2)), op, cfg)
    path = tmp_path / "conv.csv"
    trace.write_objective_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iteration,objective"
    assert len(lines) == 6
    assert float(lines[1].split(",")[1]) == pytest.approx(trace.objectives[0])
