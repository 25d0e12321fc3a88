import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from hsvi.bounds import (AlphaVector, LowerBound, PolicyFormatError, UpperBound, backup, init_lower_blind,
                         init_upper_mdp, initialize_bounds, lower_update, prune_lower, prune_upper,
                         read_policy, upper_update, write_policy)
from hsvi.model import Belief

from helpers import brute_force_backup, random_belief, small_models, tiger_vstar_bracket


def _grown_lower(model, rng, updates=6):
    lb, _ = init_lower_blind(model)
    for _ in range(updates):
        lower_update(lb, model, Belief.from_dense(random_belief(rng, model.num_states)))
    return lb


def _as_pairs(lb, S):
    return [(v.dense(S), v.mask) for v in lb.vectors()]


def test_backup_matches_brute_force(tiger, rocksample_2_1):
    """200 random (fixture, belief) pairs against the dense Bellman oracle."""
    rng = np.random.default_rng(11)
    fixtures = small_models(tiger, rocksample_2_1)
    lowers = [_grown_lower(m, rng) for m in fixtures]
    for trial in range(200):
        k = trial % len(fixtures)
        model, lb = fixtures[k], lowers[k]
        S = model.num_states
        b = random_belief(rng, S)
        if model.name.startswith("rocksample"):
            # keep the robot position known, as in every reachable belief
            b = np.zeros(S)
            b[model.initial_belief.index] = rng.dirichlet(np.ones(len(model.initial_belief)))
        vec = backup(model, lb, Belief.from_dense(b))
        expected, action, full = brute_force_backup(model, _as_pairs(lb, S), b)
        assert vec.dot(Belief.from_dense(b)) == pytest.approx(expected, abs=1e-9)
        if vec.action == action:
            # masked vector agrees with the full backup on its mask
            assert vec.values == pytest.approx(full[vec.mask], abs=1e-9)


def test_masked_vector_only_serves_its_support(rocksample_2_1):
    lb = LowerBound(rocksample_2_1.num_states)
    lb.add(AlphaVector(np.zeros(rocksample_2_1.num_states), None, 0), blind=True)
    lb.add(AlphaVector(np.array([100.0]), np.array([3]), 1))
    assert lb.value(Belief.point(3)) == 100.0
    assert lb.value(Belief.from_dense(np.eye(rocksample_2_1.num_states)[[2, 3]].mean(axis=0))) == 0.0


def _lp_projection(points, values, b):
    """min sum_i lam_i v_i s.t. sum_i lam_i b_i = b, lam >= 0."""
    res = linprog(values, A_eq=np.array(points).T, b_eq=b, bounds=[(0, None)] * len(values), method="highs")
    assert res.status == 0
    return res.fun


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), S=st.sampled_from([2, 3]))
def test_sawtooth_dominates_lp_projection(seed, S):
    rng = np.random.default_rng(seed)
    # points sampled from a convex function, so the LP is exact at stored points
    planes = rng.uniform(-5, 5, size=(4, S))
    f = lambda x: float((planes @ x).max())  # noqa: E731
    corner = np.array([f(e) for e in np.eye(S)])
    ub = UpperBound(corner)
    pts = [np.eye(S)[i] for i in range(S)]
    vals = list(corner)
    for _ in range(6):
        x = random_belief(rng, S)
        if ub.add(Belief.from_dense(x), f(x)):
            pts.append(x)
            vals.append(f(x))
    for _ in range(10):
        q = random_belief(rng, S)
        assert ub.value(Belief.from_dense(q)) >= _lp_projection(pts, vals, q) - 1e-9
    for x, v in zip(pts[S:], vals[S:]):
        assert ub.value(Belief.from_dense(x)) == pytest.approx(_lp_projection(pts, vals, x), abs=1e-9)
        assert ub.value(Belief.from_dense(x)) == pytest.approx(v, abs=1e-9)


def test_upper_add_rejects_points_above_interpolation():
    ub = UpperBound(np.array([0.0, 0.0]))
    assert not ub.add(Belief.from_dense([0.5, 0.5]), 1.0)
    assert ub.add(Belief.from_dense([0.5, 0.5]), -1.0)
    assert len(ub) == 1
    assert ub.value(Belief.from_dense([0.75, 0.25])) == pytest.approx(-0.5)


def test_fib_below_mdp(models):
    for m in models:
        bounds = initialize_bounds(m)
        assert np.all(bounds.upper.corner <= bounds.q_mdp.max(axis=1) + 1e-9)


def test_initial_bounds_bracket_tiger_optimum(tiger):
    lo, hi = tiger_vstar_bracket(tiger)
    bounds = initialize_bounds(tiger)
    b0 = tiger.initial_belief
    assert bounds.lower.value(b0) <= lo + 1e-9
    assert bounds.upper.value(b0) >= hi - 1e-9
    # blind floor for tiger is listening forever
    assert bounds.lower.value(b0) == pytest.approx(-1 / 0.05, abs=0.05)


def test_mdp_values(tiger):
    v, q, info = init_upper_mdp(tiger, 1e-8, 10_000)
    assert info.converged
    # fully observed tiger: open the safe door every step
    assert v == pytest.approx([10 / 0.05, 10 / 0.05], abs=1e-5)


def test_updates_keep_bounds_sandwiched(models):
    rng = np.random.default_rng(5)
    for m in models:
        bounds = initialize_bounds(m)
        for _ in range(15):
            b = Belief.from_dense(random_belief(rng, m.num_states))
            if m.name.startswith("rocksample"):
                b = m.initial_belief
            before = (bounds.lower.value(b), bounds.upper.value(b))
            lower_update(bounds.lower, m, b)
            upper_update(bounds.upper, m, b)
            after = (bounds.lower.value(b), bounds.upper.value(b))
            assert after[0] >= before[0] - 1e-9
            assert after[1] <= before[1] + 1e-9
            assert after[0] <= after[1] + 1e-9


def test_prune_lower_keeps_witness_values(tiger):
    rng = np.random.default_rng(0)
    lb = _grown_lower(tiger, rng, updates=40)
    witnesses = [w for w in lb.witnesses if w is not None]
    before = [lb.value(w) for w in witnesses]
    prune_lower(lb, witnesses)
    assert [lb.value(w) for w in witnesses] == pytest.approx(before, abs=1e-12)
    assert sum(lb.blind) == tiger.num_actions


def test_prune_upper_never_raises_values(tiger):
    rng = np.random.default_rng(1)
    bounds = initialize_bounds(tiger)
    ub = bounds.upper
    for _ in range(60):
        upper_update(ub, tiger, Belief.from_dense(random_belief(rng, 2, sparse=False)))
    probes = [Belief.from_dense(random_belief(rng, 2, sparse=False)) for _ in range(100)]
    before = np.array([ub.value(b) for b in probes])
    prune_upper(ub)
    after = np.array([ub.value(b) for b in probes])
    assert np.all(np.abs(after - before) <= 1e-9)


def test_policy_round_trip(tmp_path, rocksample_2_1):
    rng = np.random.default_rng(2)
    lb, _ = init_lower_blind(rocksample_2_1)
    for _ in range(5):
        lower_update(lb, rocksample_2_1, rocksample_2_1.initial_belief)
        lower_update(lb, rocksample_2_1, Belief.from_dense(random_belief(rng, rocksample_2_1.num_states)))
    path = write_policy(tmp_path / "p.txt", lb, rocksample_2_1)
    back = read_policy(path, rocksample_2_1)
    assert len(back) == len(lb)
    for v1, v2 in zip(lb.vectors(), back.vectors()):
        assert v1.action == v2.action
        assert np.array_equal(v1.mask, v2.mask) if v1.mask is not None else v2.mask is None
        assert np.array_equal(v1.values, v2.values)


def test_policy_problem_mismatch(tmp_path, tiger):
    lb, _ = init_lower_blind(tiger)
    path = write_policy(tmp_path / "p.txt", lb, tiger)
    with pytest.raises(PolicyFormatError, match="problem"):
        read_policy(path, tiger.with_discount(0.9))
    read_policy(path, tiger.with_discount(0.9), check_problem=False)
    path.write_text("not a policy\n")
    with pytest.raises(PolicyFormatError):
        read_policy(path, tiger)
