import warnings

import numpy as np
import pytest

from hsvi.theory import (BeliefSet, GraphTruncation, belief_set, bellman_at, bracket_vstar, build_graph,
                         conceptual_vi, exact_value_iteration, gamma_values, policy_value_interval,
                         prune_vectors, random_model, sample_spacing, verify_contraction,
                         verify_error_bounds, weighted_norm_distance)

from helpers import random_belief, tiger_vstar_bracket

P_GRID = [0.0, 0.25, 0.5, 0.75]


@pytest.fixture(scope="module")
def tiger_graph(tiger):
    return build_graph(tiger, 4)


@pytest.fixture(scope="module")
def rand4():
    return random_model(seed=0)


def test_graph_structure(tiger, tiger_graph):
    g = tiger_graph
    assert g.depth[0] == 0 and g.rho[0] == 1.0
    assert g.check_rho()
    # depth-1 nodes: listen gives two posteriors, opening returns to b0
    assert sorted(map(tuple, np.round(g.beliefs[g.depth == 1], 6))) == [(0.15, 0.85), (0.85, 0.15)]
    # deduplicated: opening any door never creates a new node
    assert len({tuple(np.round(b, 9)) for b in g.beliefs}) == g.num_nodes


def test_spacing_brute_force(tiger):
    g = build_graph(tiger, 3)
    B = BeliefSet(g.beliefs[:1])
    for p in P_GRID:
        expected = max(
            min(np.abs(g.beliefs[i] - bb).sum() for bb in B.beliefs) / g.rho[i] ** p
            for i in range(g.num_nodes)
        )
        assert sample_spacing(g, B, p) == pytest.approx(expected)


def test_spacing_properties(tiger_graph):
    g = tiger_graph
    assert sample_spacing(g, belief_set(g), 0.5) == 0.0
    small, large = belief_set(g, 1), belief_set(g, 2)
    assert sample_spacing(g, large, 0.5) <= sample_spacing(g, small, 0.5)
    assert sample_spacing(g, small, 0.0) <= sample_spacing(g, small, 0.5) <= sample_spacing(g, small, 0.75)
    with pytest.raises(ValueError):
        sample_spacing(g, small, 1.0)


def test_weighted_norm(tiger_graph):
    g = tiger_graph
    G = np.array([[1.0, -2.0], [0.0, 3.0]])
    assert weighted_norm_distance(g, G, G, 0.5) == 0.0
    gap = 0.7
    d = weighted_norm_distance(g, G, G + gap, 0.5)
    assert d == pytest.approx(gap / 0.95 ** (0.5 * g.depth.max()))
    V = gamma_values(G, g.beliefs)
    assert weighted_norm_distance(g, V, V + np.arange(g.num_nodes), 0.0) == pytest.approx(g.num_nodes - 1)


def test_conceptual_vi_single_point_zero_discount(tiger):
    m = tiger.with_discount(0.0)
    b0 = m.initial_belief.to_dense(2)
    sets = conceptual_vi(m, BeliefSet(b0[None, :]), 1)
    a_star = int(np.argmax(b0 @ m.reward))
    assert sets[1].shape == (1, 2)
    assert sets[1][0] == pytest.approx(m.reward[:, a_star])


def test_conceptual_vi_below_exact(tiger, tiger_graph):
    B = belief_set(tiger_graph, 2)
    point = conceptual_vi(tiger, B, 6)
    exact = exact_value_iteration(tiger, 6, samples=tiger_graph.beliefs)
    for t in range(7):
        if t:
            assert point[t].shape[0] == len(B)
        assert np.all(gamma_values(point[t], tiger_graph.beliefs)
                      <= gamma_values(exact[t], tiger_graph.beliefs) + 1e-9)
    b0_vals = [gamma_values(G, tiger_graph.beliefs[:1])[0] for G in point]
    assert np.all(np.diff(b0_vals) >= -1e-12)


def test_exact_vi_matches_bellman(tiger, rand4):
    rng = np.random.default_rng(0)
    for m in (tiger, rand4):
        sets = exact_value_iteration(m, 3)
        X = np.array([random_belief(rng, m.num_states, sparse=False) for _ in range(50)])
        # exact VI step t+1 equals the Bellman operator applied to step t everywhere
        for t in range(3):
            assert gamma_values(sets[t + 1], X) == pytest.approx(bellman_at(m, sets[t], X), abs=1e-9)
    assert exact_value_iteration(tiger, 1, V0=np.zeros((1, 2)))[1].shape[0] == 3


def test_prune_vectors_keeps_envelope():
    rng = np.random.default_rng(4)
    V = rng.normal(size=(40, 3))
    P = prune_vectors(V)
    X = rng.dirichlet(np.ones(3), size=500)
    assert gamma_values(P, X) == pytest.approx(gamma_values(V, X))
    assert P.shape[0] < 40
    assert prune_vectors(np.vstack([V[:1], V[:1] - 1])).shape[0] == 1


@pytest.mark.parametrize("p", P_GRID)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_contraction_random_models(p, seed):
    m = random_model(seed=seed)
    g = build_graph(m, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GraphTruncation)
        rep = verify_contraction(m, g, p, 300, seed=seed)
    assert rep.passed, (rep.max_ratio, rep.bound)
    assert rep.bound == pytest.approx(0.95 ** (1 - p))


def test_contraction_classical_case_on_tiger(tiger, tiger_graph):
    with pytest.warns(GraphTruncation):
        rep = verify_contraction(tiger, tiger_graph, 0.0, 300)
    assert rep.passed
    assert rep.max_ratio <= 0.95 + 1e-9


def test_contraction_negative_control(rand4):
    g = build_graph(rand4, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GraphTruncation)
        rep = verify_contraction(rand4, g, 0.0, 300, claimed_discount=0.5)
    assert not rep.passed


def test_tiger_reset_breaks_weighted_contraction(tiger, tiger_graph):
    """Known gap: a deep belief whose child is b0 violates the weighted factor.

    Opening a door from a depth-L node returns to b0 (depth 0), so the child
    weight ratio rho(b')/rho(b) is gamma^-L rather than at most gamma^-1.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GraphTruncation)
        rep = verify_contraction(tiger, tiger_graph, 0.5, 300)
    assert rep.violations > 0
    assert rep.max_ratio > rep.bound


def test_error_bounds_zero_spacing(rand4):
    g = build_graph(rand4, 3)
    B = belief_set(g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GraphTruncation)
        rep = verify_error_bounds(rand4, g, B, 0.5, num_steps=4, vstar_budget=2)
    assert rep.spacing == 0.0
    # every graph node whose children are in the graph is in B, so H V = H_B V there
    assert rep.backup_bound == 0.0


@pytest.mark.parametrize("which", ["tiger", "random"])
def test_error_bounds_hold(which, tiger, rand4):
    m = tiger if which == "tiger" else rand4
    g = build_graph(m, 4)
    B = belief_set(g, 2)
    vstar = bracket_vstar(m, g.beliefs, time_budget=4)
    assert np.all(vstar[0] <= vstar[1] + 1e-12)
    for p in (0.0, 0.5):
        rep = verify_error_bounds(m, g, B, p, num_steps=6, vstar_interval=vstar)
        assert rep.passed, rep.rows()
        assert rep.below_exact and rep.monotone_b0


def test_p_zero_reduces_to_max_norm_forms(rand4):
    g = build_graph(rand4, 3)
    B = belief_set(g, 1)
    vstar = bracket_vstar(rand4, g.beliefs, time_budget=2)
    rep = verify_error_bounds(rand4, g, B, 0.0, num_steps=3, vstar_interval=vstar)
    span = rand4.reward_extrema.r_max - rand4.reward_extrema.r_min
    assert rep.backup_bound == pytest.approx(span * rep.spacing / 0.05)
    assert rep.fixed_point_bound == pytest.approx(span * rep.spacing / 0.05 ** 2)


def test_policy_value_interval_closed_tiger_policy(tiger):
    # a flat continuation still induces listen-until-confident, whose belief graph is finite
    lo, hi, closed = policy_value_interval(tiger, np.array([[-20.0, -20.0]]), max_nodes=2000)
    assert closed
    assert lo == pytest.approx(hi)
    vlo, vhi = tiger_vstar_bracket(tiger)
    assert lo <= vhi + 1e-6


def test_policy_value_interval_open_graph_brackets(rand4):
    G = conceptual_vi(rand4, BeliefSet(rand4.initial_belief.to_dense(4)[None, :]), 3)[-1]
    lo, hi, closed = policy_value_interval(rand4, G, max_nodes=200)
    assert not closed and lo < hi
    lo2, hi2, _ = policy_value_interval(rand4, G, max_nodes=200, leaf_upper=lambda X: np.full(len(X), 0.0))
    assert lo2 == pytest.approx(lo) and hi2 <= hi
