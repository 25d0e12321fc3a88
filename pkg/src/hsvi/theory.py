"""Discounted-reachability analysis on small problems.

Builds the depth-truncated reachable belief graph, computes weighted sample
spacing and weighted max-norm distances, runs conceptual point-based value
iteration next to exact value iteration, and checks the contraction, single
step error, accumulated error and regret inequalities numerically.

Everything here works with dense arrays and is intended for models with a
handful of states.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import splu

from .model import Belief, PomdpModel, expand, make_model

log = logging.getLogger(__name__)

__all__ = [
    "GraphTruncation", "ReachableBeliefGraph", "BeliefSet", "build_graph", "belief_set",
    "sample_spacing", "weighted_norm_distance", "conceptual_vi", "exact_value_iteration", "bracket_vstar",
    "point_backup", "bellman_at", "gamma_values", "prune_vectors", "verify_contraction",
    "verify_error_bounds", "ContractionReport", "ErrorBoundReport", "random_model",
    "policy_value_interval",
]

SLACK = 1e-9


class GraphTruncation(UserWarning):
    """Some quantity needed children beyond the graph's depth cap."""


@dataclass
class ReachableBeliefGraph:
    """Breadth-first belief graph from b0, truncated at ``max_depth``.

    ``beliefs`` is a dense N x S array, ``depth`` the shortest-path depth of
    each node and ``edges`` an E x 4 table of (parent, action, observation,
    child) with matching ``edge_prob`` = Pr(z | b, a).
    """

    beliefs: np.ndarray
    depth: np.ndarray
    edges: np.ndarray
    edge_prob: np.ndarray
    discount: float
    max_depth: int

    @property
    def num_nodes(self) -> int:
        return self.beliefs.shape[0]

    @property
    def rho(self) -> np.ndarray:
        return self.discount ** self.depth.astype(np.float64)

    @property
    def interior(self) -> np.ndarray:
        """Nodes whose children were all expanded into the graph."""
        return np.flatnonzero(self.depth < self.max_depth)

    def node(self, i: int) -> Belief:
        return Belief.from_dense(self.beliefs[i])

    def check_rho(self) -> bool:
        rho = self.rho
        p, c = self.edges[:, 0], self.edges[:, 3]
        return bool(np.all(rho[c] >= self.discount * rho[p] - 1e-15))


@dataclass
class BeliefSet:
    beliefs: np.ndarray
    tags: list = field(default_factory=list)

    def __post_init__(self):
        self.beliefs = np.atleast_2d(np.asarray(self.beliefs, dtype=np.float64))
        if self.beliefs.shape[0] == 0:
            raise ValueError("belief set must be nonempty")
        if not self.tags:
            self.tags = ["given"] * self.beliefs.shape[0]

    def __len__(self):
        return self.beliefs.shape[0]


def _dense_model(model: PomdpModel):
    T = np.stack([t.toarray() for t in model.transition])
    O = np.stack([o.toarray() for o in model.observation])
    return T, O, np.asarray(model.reward)


def build_graph(model: PomdpModel, depth: int = 6, b0: Belief | None = None, tol: float = 1e-9,
                max_nodes: int = 200_000) -> ReachableBeliefGraph:
    """Breadth-first expansion of tau from b0 with 1-norm deduplication at ``tol``."""
    S = model.num_states
    b0 = model.initial_belief if b0 is None else b0
    nodes = [b0.to_dense(S)]
    depths = [0]
    buckets = {}
    grid = max(tol, 1e-12) * 10

    def key(vec):
        return np.round(vec / grid).astype(np.int64).tobytes()

    buckets[key(nodes[0])] = [0]

    def find_or_add(vec, d):
        k = key(vec)
        for j in buckets.get(k, ()):
            if np.abs(nodes[j] - vec).sum() <= tol:
                return j
        nodes.append(vec)
        depths.append(d)
        buckets.setdefault(k, []).append(len(nodes) - 1)
        return len(nodes) - 1

    edges, probs = [], []
    frontier = [0]
    for d in range(depth):
        nxt = []
        for i in frontier:
            b = Belief.from_dense(nodes[i])
            for a in range(model.num_actions):
                exp = expand(model, b, a)
                for z, pz, child in exp.children():
                    before = len(nodes)
                    j = find_or_add(child.to_dense(S), d + 1)
                    if len(nodes) > before:
                        nxt.append(j)
                    edges.append((i, a, z, j))
                    probs.append(pz)
            if len(nodes) > max_nodes:
                raise RuntimeError(f"belief graph exceeded {max_nodes} nodes at depth {d + 1}")
        frontier = nxt
    graph = ReachableBeliefGraph(np.array(nodes), np.array(depths), np.array(edges, dtype=np.int64).reshape(-1, 4),
                                 np.array(probs), model.discount, depth)
    assert graph.check_rho()
    return graph


def belief_set(graph: ReachableBeliefGraph, max_depth: int | None = None, extra=None) -> BeliefSet:
    """Graph nodes up to ``max_depth`` (all nodes by default), plus optional extra beliefs."""
    sel = np.arange(graph.num_nodes) if max_depth is None else np.flatnonzero(graph.depth <= max_depth)
    beliefs = [graph.beliefs[sel]]
    tags = [f"graph-depth-{graph.depth[i]}" for i in sel]
    if extra is not None:
        extra = np.atleast_2d(extra)
        beliefs.append(extra)
        tags += ["extra"] * extra.shape[0]
    return BeliefSet(np.vstack(beliefs), tags)


# --------------------------------------------------------------------------
# spacing and norms


def _l1_distances(X: np.ndarray, Y: np.ndarray, chunk: int = 4096) -> np.ndarray:
    out = np.empty((X.shape[0], Y.shape[0]))
    for lo in range(0, X.shape[0], chunk):
        out[lo:lo + chunk] = np.abs(X[lo:lo + chunk, None, :] - Y[None, :, :]).sum(axis=2)
    return out


def sample_spacing(graph: ReachableBeliefGraph, B: BeliefSet, p: float) -> float:
    """max over graph nodes b of min over B of |b - b'|_1 / rho(b)^p."""
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    dist = _l1_distances(graph.beliefs, B.beliefs).min(axis=1)
    return float((dist / graph.rho ** p).max())


def gamma_values(Gamma: np.ndarray, beliefs: np.ndarray) -> np.ndarray:
    """max_alpha alpha . b for each row of ``beliefs``."""
    return (beliefs @ np.atleast_2d(Gamma).T).max(axis=1)


def _node_values(V, graph: ReachableBeliefGraph) -> np.ndarray:
    if callable(V):
        return np.array([V(b) for b in graph.beliefs])
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1 and V.size == graph.num_nodes and V.size != graph.beliefs.shape[1]:
        return V
    return gamma_values(V, graph.beliefs)


def weighted_norm_distance(graph: ReachableBeliefGraph, V1, V2, p: float, nodes=None) -> float:
    """max over graph nodes of |V1(b) - V2(b)| / rho(b)^p.

    Value functions may be alpha-vector arrays (k x S), callables on dense
    beliefs, or arrays of per-node values.
    """
    diff = np.abs(_node_values(V1, graph) - _node_values(V2, graph)) / graph.rho ** p
    if nodes is not None:
        diff = diff[nodes]
    return float(diff.max()) if diff.size else 0.0


# --------------------------------------------------------------------------
# backups on dense models


class _Dense:
    def __init__(self, model: PomdpModel, discount: float | None = None):
        self.T, self.O, self.R = _dense_model(model)
        self.gamma = model.discount if discount is None else discount
        self.A, self.S, self.Z = self.O.shape[0], self.O.shape[1], self.O.shape[2]
        # M[a, z] = T_a diag(O_a[:, z])
        self.M = self.T[:, None, :, :] * np.transpose(self.O, (0, 2, 1))[:, :, None, :]

    def projections(self, Gamma: np.ndarray) -> np.ndarray:
        """g[a, z, i, s] = gamma sum_s' T(s,s') O(s',z) Gamma_i(s')."""
        return self.gamma * np.einsum("azst,it->azis", self.M, Gamma)

    def backup(self, Gamma: np.ndarray, beliefs: np.ndarray) -> tuple:
        """Full-mask point backups at every row of ``beliefs``: (vectors, actions)."""
        g = self.projections(Gamma)
        m = beliefs.shape[0]
        best_val = np.full(m, -np.inf)
        best_vec = np.zeros((m, self.S))
        best_act = np.zeros(m, dtype=np.int64)
        for a in range(self.A):
            vec = np.tile(self.R[:, a], (m, 1))
            for z in range(self.Z):
                scores = beliefs @ g[a, z].T
                vec += g[a, z][np.argmax(scores, axis=1)]
            val = (vec * beliefs).sum(axis=1)
            better = val > best_val
            best_val[better], best_vec[better], best_act[better] = val[better], vec[better], a
        return best_vec, best_act

    def q_values(self, Gamma: np.ndarray, beliefs: np.ndarray) -> np.ndarray:
        """Q_a(b) = R(b,a) + gamma sum_z Pr(z|b,a) V(tau(b,a,z)) for V = max over Gamma."""
        g = self.projections(Gamma)
        q = beliefs @ self.R
        for a in range(self.A):
            for z in range(self.Z):
                q[:, a] += (beliefs @ g[a, z].T).max(axis=1)
        return q


def point_backup(model: PomdpModel, Gamma: np.ndarray, b) -> np.ndarray:
    """Full-mask backup of ``Gamma`` at one belief (dense)."""
    b = b.to_dense(model.num_states) if isinstance(b, Belief) else np.asarray(b, dtype=float)
    vec, _ = _Dense(model).backup(np.atleast_2d(Gamma), b[None, :])
    return vec[0]


def bellman_at(model: PomdpModel, Gamma: np.ndarray, beliefs: np.ndarray, discount: float | None = None) -> np.ndarray:
    """(H V)(b) for V = max over ``Gamma`` at each row of ``beliefs``."""
    return _Dense(model, discount).q_values(np.atleast_2d(Gamma), np.atleast_2d(beliefs)).max(axis=1)


def _floor_vector(model: PomdpModel) -> np.ndarray:
    return np.full((1, model.num_states), model.reward_extrema.r_min / (1.0 - model.discount))


def conceptual_vi(model: PomdpModel, B: BeliefSet, num_steps: int, V0: np.ndarray | None = None) -> list:
    """Gamma_0 = {floor}; Gamma_{t+1} = {backup(Gamma_t, b) : b in B} with full masks.

    The floor is the constant R_min / (1 - gamma).
    """
    dense = _Dense(model)
    Gamma = _floor_vector(model) if V0 is None else np.atleast_2d(V0)
    out = [Gamma]
    for _ in range(num_steps):
        Gamma, _ = dense.backup(Gamma, B.beliefs)
        out.append(Gamma)
    return out


# --------------------------------------------------------------------------
# exact value iteration


def _lp_witness(u: np.ndarray, W: np.ndarray):
    """Belief where u beats every row of W by the largest margin, if positive."""
    S = u.size
    # variables (b_1..b_S, d); maximize d s.t. b.(w - u) + d <= 0, sum b = 1
    c = np.zeros(S + 1)
    c[-1] = -1.0
    A_ub = np.hstack([W - u[None, :], np.ones((W.shape[0], 1))])
    A_eq = np.hstack([np.ones((1, S)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(W.shape[0]), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * S + [(None, None)], method="highs")
    if res.status != 0:
        return None, -np.inf
    return res.x[:S], -res.fun


def prune_vectors(V: np.ndarray, tol: float = 1e-10, samples: np.ndarray | None = None) -> np.ndarray:
    """Minimal subset of V with the same upper envelope over the simplex."""
    V = np.unique(np.atleast_2d(V), axis=0)
    if V.shape[0] <= 1:
        return V
    # pointwise dominance
    keep = np.ones(V.shape[0], dtype=bool)
    for i in range(V.shape[0]):
        if not keep[i]:
            continue
        dom = np.all(V >= V[i] - tol, axis=1) & keep
        dom[i] = False
        if dom.any():
            keep[i] = False
    V = V[keep]
    S = V.shape[1]
    pts = [np.eye(S)]
    if samples is not None:
        pts.append(np.atleast_2d(samples))
    pts = np.vstack(pts)
    chosen = set(np.argmax(pts @ V.T, axis=1).tolist())
    W = list(sorted(chosen))
    rest = [i for i in range(V.shape[0]) if i not in chosen]
    while rest:
        i = rest.pop()
        b, margin = _lp_witness(V[i], V[W])
        if margin > tol:
            j = int(np.argmax(V @ b))
            if j not in chosen:
                chosen.add(j)
                W.append(j)
                if j != i:
                    rest.append(i)
                    if j in rest:
                        rest.remove(j)
    return V[sorted(chosen)]


def _cross_sum(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return (A[:, None, :] + B[None, :, :]).reshape(-1, A.shape[1])


def exact_value_iteration(model: PomdpModel, num_steps: int, V0: np.ndarray | None = None,
                          samples: np.ndarray | None = None, max_vectors: int = 5000) -> list:
    """Exact Bellman iteration on alpha-vector sets with LP pruning (incremental pruning)."""
    dense = _Dense(model)
    Gamma = _floor_vector(model) if V0 is None else np.atleast_2d(V0)
    out = [Gamma]
    for _ in range(num_steps):
        g = dense.projections(Gamma)
        per_action = []
        for a in range(dense.A):
            acc = None
            for z in range(dense.Z):
                part = prune_vectors(g[a, z], samples=samples)
                acc = part if acc is None else prune_vectors(_cross_sum(acc, part), samples=samples)
            per_action.append(acc + dense.R[:, a][None, :])
        Gamma = prune_vectors(np.vstack(per_action), samples=samples)
        if Gamma.shape[0] > max_vectors:
            raise RuntimeError(f"exact value iteration exceeded {max_vectors} vectors")
        out.append(Gamma)
    return out


# --------------------------------------------------------------------------
# verification


@dataclass
class ContractionReport:
    p: float
    trials: int
    max_ratio: float
    bound: float
    violations: int
    worst_margin: float
    truncated: bool
    depth: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def random_gamma(rng, model: PomdpModel, max_vectors: int = 5) -> np.ndarray:
    lo = model.reward_extrema.r_min / (1 - model.discount)
    hi = model.reward_extrema.r_max / (1 - model.discount)
    k = int(rng.integers(1, max_vectors + 1))
    return rng.uniform(lo, hi, size=(k, model.num_states))


def verify_contraction(model: PomdpModel, graph: ReachableBeliefGraph, p: float, num_trials: int = 1000,
                       seed: int = 0, claimed_discount: float | None = None, max_vectors: int = 5,
                       slack: float = SLACK) -> ContractionReport:
    """Check |HV - HV'|_{rho^p} <= g^(1-p) |V - V'|_{rho^p} on random alpha-vector pairs.

    HV is evaluated at interior graph nodes (whose children are all in the
    graph); |V - V'| is measured over every node. ``claimed_discount``
    replaces gamma in the bound only (negative control).
    """
    rng = np.random.default_rng(seed)
    dense = _Dense(model)
    rho_p = graph.rho ** p
    interior = graph.interior
    if interior.size < graph.num_nodes:
        warnings.warn(f"contraction LHS restricted to {interior.size} of {graph.num_nodes} nodes "
                      f"(depth cap {graph.max_depth})", GraphTruncation, stacklevel=2)
    gamma_b = model.discount if claimed_discount is None else claimed_discount
    factor = gamma_b ** (1 - p)
    worst_ratio, worst_margin, violations = 0.0, -np.inf, 0
    Bi = graph.beliefs[interior]
    for _ in range(num_trials):
        G1 = random_gamma(rng, model, max_vectors)
        G2 = G1.copy() if rng.random() < 0.02 else random_gamma(rng, model, max_vectors)
        rhs = (np.abs(gamma_values(G1, graph.beliefs) - gamma_values(G2, graph.beliefs)) / rho_p).max()
        h1 = dense.q_values(G1, Bi).max(axis=1)
        h2 = dense.q_values(G2, Bi).max(axis=1)
        lhs = (np.abs(h1 - h2) / rho_p[interior]).max()
        margin = lhs - factor * rhs
        worst_margin = max(worst_margin, margin)
        if rhs > 0:
            worst_ratio = max(worst_ratio, lhs / rhs)
        if margin > slack:
            violations += 1
    return ContractionReport(p, num_trials, worst_ratio, factor, violations, worst_margin,
                             interior.size < graph.num_nodes, graph.max_depth)


@dataclass
class ErrorBoundReport:
    p: float
    depth: int
    num_steps: int
    spacing: float
    backup_bound: float
    backup_worst: float
    fixed_point_bound: float
    fixed_point_worst: float
    regret_interval: tuple
    regret_bound: float
    violations: dict
    monotone_b0: bool
    below_exact: bool
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    def rows(self) -> list:
        return [
            ("backup-gap", self.backup_worst, self.backup_bound, self.violations["backup-gap"]),
            ("fixed-point-gap", self.fixed_point_worst, self.fixed_point_bound, self.violations["fixed-point-gap"]),
            ("regret", self.regret_interval[0], self.regret_bound, self.violations["regret"]),
        ]


def _lookahead_actions(dense: _Dense, Gamma: np.ndarray, beliefs: np.ndarray) -> np.ndarray:
    return np.argmax(dense.q_values(Gamma, beliefs), axis=1)


def policy_value_interval(model: PomdpModel, Gamma: np.ndarray, max_nodes: int = 20_000,
                          tol: float = 1e-9, leaf_upper=None) -> tuple:
    """Interval for the value at b0 of the one-step lookahead policy induced by Gamma.

    Expands the beliefs the policy can reach (deduplicated) and solves the
    policy's linear evaluation equations. Unexpanded leaves are bracketed by
    the reward extremes divided by (1 - gamma); ``leaf_upper(beliefs)`` may
    give a tighter upper bracket (any upper bound on V* is valid).
    """
    dense = _Dense(model)
    S = model.num_states
    grid = tol * 10
    nodes, rows = [model.initial_belief.to_dense(S)], []
    index = {np.round(nodes[0] / grid).astype(np.int64).tobytes(): [0]}
    i = 0
    while i < len(nodes) and len(nodes) < max_nodes:
        b = nodes[i]
        a = int(_lookahead_actions(dense, Gamma, b[None, :])[0])
        exp = expand(model, Belief.from_dense(b), a)
        succ = []
        for z, pz, child in exp.children():
            vec = child.to_dense(S)
            key = np.round(vec / grid).astype(np.int64).tobytes()
            j = next((k for k in index.get(key, ()) if np.abs(nodes[k] - vec).sum() <= tol), None)
            if j is None:
                nodes.append(vec)
                j = len(nodes) - 1
                index.setdefault(key, []).append(j)
            succ.append((j, pz))
        rows.append((float(b @ dense.R[:, a]), succ))
        i += 1
    n_int = len(rows)
    n = len(nodes)
    closed = n_int == n
    r = np.array([row[0] for row in rows])
    ri, ci, vals = [], [], []
    for k, (_, succ) in enumerate(rows):
        for j, pz in succ:
            ri.append(k)
            ci.append(j)
            vals.append(pz)
    P = sp.csr_matrix((vals, (ri, ci)), shape=(n_int, n))
    gamma = model.discount
    lo_leaf = model.reward_extrema.r_min / (1 - gamma)
    hi_leaf = model.reward_extrema.r_max / (1 - gamma)
    lu = splu((sp.identity(n_int, format="csc") - gamma * P[:, :n_int]).tocsc())
    P_leaf = P[:, n_int:]
    leaf_mass = np.asarray(P_leaf.sum(axis=1)).ravel()
    lo = lu.solve(r + gamma * leaf_mass * lo_leaf)
    if leaf_upper is not None and n > n_int:
        hi_leaf = np.minimum(hi_leaf, leaf_upper(np.array(nodes[n_int:])))
        hi = lu.solve(r + gamma * (P_leaf @ hi_leaf))
    else:
        hi = lu.solve(r + gamma * leaf_mass * hi_leaf)
    return float(lo[0]), float(hi[0]), closed


def bracket_vstar(model: PomdpModel, beliefs: np.ndarray, epsilon: float = 1e-3,
                   time_budget: float = 20.0):
    """Sound (lower, upper) brackets on V* at each row of ``beliefs``.

    Runs the heuristic search solver from b0 and then from every listed
    belief until its own width is at most epsilon or the budget is spent.
    Returns the bracket arrays and the bounds object (for leaf brackets).
    """
    from .solver import SolveParams, _Search, solve

    per_phase = time_budget / 2
    result = solve(model, SolveParams(epsilon=epsilon, time_budget=per_phase))
    bounds = result.bounds
    search = _Search(model, bounds, SolveParams(epsilon=epsilon))
    search.deadline = time.perf_counter() + per_phase
    pending = [Belief.from_dense(b) for b in beliefs]
    for _ in range(50):
        pending = [b for b in pending if bounds.width(b) > epsilon]
        if not pending or search.out_of_time():
            break
        for b in pending:
            search.explore(b, 0)
            if search.out_of_time():
                break
    lo = np.array([bounds.lower.value(Belief.from_dense(b)) for b in beliefs])
    hi = np.array([bounds.upper.value(Belief.from_dense(b)) for b in beliefs])
    return lo, hi, bounds


def _upper_values(bounds):
    return lambda beliefs: np.array([bounds.upper.value(Belief.from_dense(b)) for b in beliefs])


def verify_error_bounds(model: PomdpModel, graph: ReachableBeliefGraph, B: BeliefSet, p: float,
                        num_steps: int = 10, vstar_steps: int | None = None, vstar_interval=None,
                        slack: float = SLACK, vstar_budget: float = 20.0) -> ErrorBoundReport:
    """Run exact and point-based value iteration in lockstep and check the error bounds.

    Single-step error: |H V_t^B - H_B V_t^B| against span * delta_p / (1 - g^(1-p)).
    Accumulated error: |V_t - V_t^B| against span * delta_p / (1 - g^(1-p))^2.
    Regret of the lookahead policy of the final V^B at b0 against
    2 g^(1-p) / (1 - g^(1-p)) |V* - V^B|. All norms are rho^p-weighted over
    graph nodes. ``vstar_interval`` may supply (lower, upper) node values
    bracketing V*, optionally followed by the solver bounds they came from
    (as returned by ``bracket_vstar``). Otherwise, if ``vstar_steps`` is given, exact value
    iteration is continued that far and the remaining tail is added; by
    default the brackets come from the solver's bounds.
    """
    dense = _Dense(model)
    gamma = model.discount
    span = model.reward_extrema.r_max - model.reward_extrema.r_min
    g1p = gamma ** (1 - p)
    rho_p = graph.rho ** p
    X = graph.beliefs
    delta = sample_spacing(graph, B, p)
    backup_bound = span * delta / (1 - g1p)
    fixed_point_bound = span * delta / (1 - g1p) ** 2
    samples = np.vstack([X, B.beliefs])
    point_sets = conceptual_vi(model, B, num_steps)
    exact_sets = exact_value_iteration(model, num_steps, samples=samples)
    backup_worst, fixed_point_worst = -np.inf, -np.inf
    viol = {"backup-gap": False, "fixed-point-gap": False, "regret": False}
    below = True
    b0_vals = []
    for t in range(num_steps + 1):
        Vb = gamma_values(point_sets[t], X)
        Vt = gamma_values(exact_sets[t], X)
        b0_vals.append(Vb[0])
        err = (np.abs(Vt - Vb) / rho_p).max()
        fixed_point_worst = max(fixed_point_worst, err)
        if err > fixed_point_bound + slack:
            viol["fixed-point-gap"] = True
        if np.any(Vb > Vt + 1e-9):
            below = False
        if t < num_steps:
            hv = dense.q_values(point_sets[t], X).max(axis=1)
            hbv = gamma_values(point_sets[t + 1], X)
            single = (np.abs(hv - hbv) / rho_p).max()
            backup_worst = max(backup_worst, single)
            if single > backup_bound + slack:
                viol["backup-gap"] = True
    notes = []
    # V* brackets at graph nodes
    leaf_upper = None
    if vstar_interval is None and vstar_steps is None:
        v_lo, v_hi, bounds = bracket_vstar(model, X, time_budget=vstar_budget)
        leaf_upper = _upper_values(bounds)
        notes.append(f"V* bracketed by solver bounds, widest {float((v_hi - v_lo).max()):.3g}")
    elif vstar_interval is None:
        Gamma = exact_sets[-1]
        extra = exact_value_iteration(model, vstar_steps, V0=Gamma, samples=samples)[-1]
        v_lo = gamma_values(extra, X)
        tail = gamma ** (num_steps + vstar_steps) * span / (1 - gamma)
        v_hi = v_lo + tail
        notes.append(f"V* from exact iteration to step {num_steps + vstar_steps}, tail {tail:.3g}")
    else:
        v_lo, v_hi = (np.asarray(x, dtype=float) for x in vstar_interval[:2])
        if len(vstar_interval) > 2:
            bounds = vstar_interval[2]
            leaf_upper = _upper_values(bounds)
    Vhat = gamma_values(point_sets[-1], X)
    dist_hi = (np.maximum(np.abs(v_lo - Vhat), np.abs(v_hi - Vhat)) / rho_p).max()
    regret_bound = 2 * g1p / (1 - g1p) * dist_hi
    j_lo, j_hi, closed = policy_value_interval(model, point_sets[-1], leaf_upper=leaf_upper)
    if not closed:
        notes.append("policy evaluation truncated; leaf values bracketed")
    regret = (float(v_lo[0] - j_hi), float(v_hi[0] - j_lo))
    if regret[0] > regret_bound + slack:
        viol["regret"] = True
    monotone = bool(np.all(np.diff(b0_vals) >= -1e-9))
    return ErrorBoundReport(p, graph.max_depth, num_steps, delta, backup_bound, float(backup_worst),
                            fixed_point_bound, float(fixed_point_worst), regret, float(regret_bound), viol,
                            monotone, below, notes)


def random_model(num_states: int = 4, num_actions: int = 2, num_observations: int = 2, seed: int = 0,
                 discount: float = 0.95) -> PomdpModel:
    """Seeded random dense POMDP with rewards in [-1, 1]."""
    rng = np.random.default_rng(seed)
    T = rng.dirichlet(np.ones(num_states), size=(num_actions, num_states))
    O = rng.dirichlet(np.ones(num_observations), size=(num_actions, num_states))
    R = rng.uniform(-1, 1, size=(num_states, num_actions))
    return make_model(T, O, R, discount, name=f"random-{num_states}-seed{seed}")
