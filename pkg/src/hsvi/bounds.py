"""Value function bounds.

The lower bound is a set of masked alpha vectors, the upper bound a set of
belief/value points evaluated with the sawtooth projection. Both keep their
data in dense ``num_states x capacity`` arrays that double when full, so a
query against a belief with support ``idx`` touches only rows ``idx``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import ZERO_TOL, ActionExpansion, Belief, PomdpModel, expand_all

log = logging.getLogger(__name__)

__all__ = [
    "AlphaVector", "LowerBound", "UpperBound", "BoundsPair", "InitResult",
    "lower_value", "upper_value", "backup", "lower_update", "upper_update",
    "init_lower_blind", "init_upper_mdp", "init_upper_fib", "initialize_bounds",
    "prune_lower", "prune_upper", "write_policy", "read_policy", "PolicyFormatError",
    "RESIDUAL_TOL", "MAX_INIT_ITERS",
]

RESIDUAL_TOL = 1e-3
MAX_INIT_ITERS = 500
_PRUNE_TOL = 1e-9


@dataclass
class AlphaVector:
    """Alpha vector whose entries are defined on ``mask`` only (None = all states)."""

    values: np.ndarray
    mask: np.ndarray | None
    action: int

    def dense(self, num_states: int) -> np.ndarray:
        """Values scattered into a full-length array (NaN outside the mask)."""
        if self.mask is None:
            return np.array(self.values, dtype=float)
        out = np.full(num_states, np.nan)
        out[self.mask] = self.values
        return out

    def admits(self, b: Belief) -> bool:
        return self.mask is None or bool(np.isin(b.index, self.mask, assume_unique=True).all())

    def dot(self, b: Belief) -> float:
        if self.mask is None:
            return float(b.prob @ self.values[b.index])
        pos = np.searchsorted(self.mask, b.index)
        return float(b.prob @ self.values[pos])


class _ColumnStore:
    """Growable ``rows x capacity`` array pair addressed by column."""

    def __init__(self, rows: int, dtype, fill, capacity: int = 16):
        self.rows = rows
        self.dtype = dtype
        self.fill = fill
        self.data = np.full((rows, capacity), fill, dtype=dtype)

    @property
    def capacity(self) -> int:
        return self.data.shape[1]

    def reserve(self, n: int):
        if n <= self.capacity:
            return
        cap = max(n, 2 * self.capacity)
        grown = np.full((self.rows, cap), self.fill, dtype=self.dtype)
        grown[:, : self.capacity] = self.data
        self.data = grown

    def keep(self, cols: np.ndarray, n: int):
        kept = self.data[:, cols]
        self.data[:, : cols.size] = kept
        self.data[:, cols.size : n] = self.fill


class LowerBound:
    """Piecewise-linear convex lower bound max over admissible masked vectors.

    A vector is admissible at b when supp(b) lies inside its mask. Vectors
    flagged ``blind`` have full masks and are never pruned, so at least one
    vector is admissible everywhere.
    """

    def __init__(self, num_states: int, capacity: int = 16):
        self.num_states = num_states
        self.n = 0
        self._vals = _ColumnStore(num_states, np.float64, 0.0, capacity)
        self._mask = _ColumnStore(num_states, np.bool_, False, capacity)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.blind = np.zeros(capacity, dtype=bool)
        self.full = np.zeros(capacity, dtype=bool)
        self.witnesses: list = []

    def __len__(self) -> int:
        return self.n

    @property
    def values(self) -> np.ndarray:
        """``num_states x n`` view of vector values (garbage outside masks)."""
        return self._vals.data[:, : self.n]

    @property
    def masks(self) -> np.ndarray:
        return self._mask.data[:, : self.n]

    def add(self, vec: AlphaVector, witness: Belief | None = None, blind: bool = False) -> int:
        j = self.n
        self._vals.reserve(j + 1)
        self._mask.reserve(j + 1)
        if self.actions.size <= j:
            cap = self._vals.capacity
            self.actions = np.resize(self.actions, cap)
            self.blind = np.resize(self.blind, cap)
            self.full = np.resize(self.full, cap)
        if vec.mask is None:
            self._vals.data[:, j] = vec.values
            self._mask.data[:, j] = True
        else:
            self._vals.data[vec.mask, j] = vec.values
            self._mask.data[vec.mask, j] = True
        self.actions[j] = vec.action
        self.blind[j] = blind
        self.full[j] = vec.mask is None
        self.witnesses.append(witness)
        self.n = j + 1
        return j

    def vector(self, j: int) -> AlphaVector:
        if self.full[j]:
            return AlphaVector(self._vals.data[:, j].copy(), None, int(self.actions[j]))
        mask = np.flatnonzero(self._mask.data[:, j])
        return AlphaVector(self._vals.data[mask, j].copy(), mask, int(self.actions[j]))

    def vectors(self) -> list:
        return [self.vector(j) for j in range(self.n)]

    def _scores(self, idx: np.ndarray, weights: np.ndarray) -> tuple:
        """Candidate vector ids and weights . alpha over idx (-inf if inadmissible)."""
        m = self._mask.data
        # a usable mask must contain the first and last support states
        cand = np.flatnonzero(m[idx[0], : self.n] & m[idx[-1], : self.n])
        if idx.size > 2:
            rows = np.ix_(idx, cand)
            vals = weights @ self._vals.data[rows]
            vals[~m[rows].all(axis=0)] = -np.inf
        else:
            vals = weights @ self._vals.data[idx][:, cand]
        return cand, vals

    def evaluate(self, b: Belief) -> np.ndarray:
        """alpha_j . b for every vector, -inf where the vector is inadmissible."""
        out = np.full(self.n, -np.inf)
        cand, vals = self._scores(b.index, b.prob)
        out[cand] = vals
        return out

    def best(self, b: Belief) -> tuple:
        """(value, vector index) of the maximizing admissible vector."""
        cand, vals = self._scores(b.index, b.prob)
        k = int(np.argmax(vals))
        return float(vals[k]), int(cand[k])

    def value(self, b: Belief) -> float:
        return self.best(b)[0]

    def keep(self, cols: np.ndarray):
        cols = np.asarray(cols, dtype=np.int64)
        self._vals.keep(cols, self.n)
        self._mask.keep(cols, self.n)
        for arr in (self.actions, self.blind, self.full):
            arr[: cols.size] = arr[cols]
        self.witnesses = [self.witnesses[j] for j in cols]
        self.n = cols.size

    def copy(self) -> "LowerBound":
        out = LowerBound(self.num_states, max(self.n, 1))
        out._vals.data[:, : self.n] = self.values
        out._mask.data[:, : self.n] = self.masks
        out.actions[: self.n] = self.actions[: self.n]
        out.blind[: self.n] = self.blind[: self.n]
        out.full[: self.n] = self.full[: self.n]
        out.witnesses = list(self.witnesses)
        out.n = self.n
        return out

    # batched child evaluation ----------------------------------------------
    def child_best(self, exp: ActionExpansion) -> tuple:
        """Best admissible vector and unnormalized value for every child of ``exp``.

        Returns (vector index per listed observation, sum_s' Pr(s', z) alpha(s')).
        """
        idx = exp.next_index
        obs = exp.observations
        best = np.empty(obs.size, dtype=np.int64)
        vals = np.empty(obs.size)
        for j, z in enumerate(obs):
            col = exp.joint[:, z]
            rows = np.flatnonzero(col > ZERO_TOL * exp.obs_prob[z])
            cand, v = self._scores(idx[rows], col[rows])
            k = int(np.argmax(v))
            best[j], vals[j] = cand[k], v[k]
        return best, vals


class UpperBound:
    """Sawtooth upper bound: corner values plus interior belief/value points.

    Only points strictly below corner interpolation are stored; for each we
    keep ``gap = value - b_i . corner`` (negative) and the support size.
    """

    def __init__(self, corner_values: np.ndarray, capacity: int = 16):
        corner = np.array(corner_values, dtype=np.float64)
        corner.setflags(write=False)
        self.corner = corner
        self.num_states = corner.size
        self.n = 0
        self._pts = _ColumnStore(self.num_states, np.float64, 0.0, capacity)
        self.gap = np.zeros(capacity)
        self.nnz = np.zeros(capacity, dtype=np.int64)
        self.point_values = np.zeros(capacity)
        # smallest support state of each point; a point can only cover b if it lies in supp(b)
        self.first = np.zeros(capacity, dtype=np.int64)
        self.beliefs: list = []
        self._flag = np.zeros(self.num_states, dtype=bool)

    def __len__(self) -> int:
        return self.n

    def interpolate(self, b: Belief) -> float:
        return float(b.prob @ self.corner[b.index])

    def value(self, b: Belief) -> float:
        vb = self.interpolate(b)
        if self.n == 0:
            return vb
        return vb + self._sawtooth_gap(b.index, b.prob)

    def _sawtooth_gap(self, idx: np.ndarray, prob: np.ndarray) -> float:
        """min(0, min_i c_i * gap_i) over points whose support lies inside idx."""
        flag = self._flag
        flag[idx] = True
        cand = np.flatnonzero(flag[self.first[: self.n]])
        flag[idx] = False
        if cand.size == 0:
            return 0.0
        sub = self._pts.data[np.ix_(idx, cand)]
        inside = sub > 0
        ok = inside.sum(axis=0) == self.nnz[cand]
        if not ok.any():
            return 0.0
        cand, sub, inside = cand[ok], sub[:, ok], inside[:, ok]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(inside, prob[:, None] / sub, np.inf).min(axis=0)
        return min(0.0, float((ratio * self.gap[cand]).min()))

    def child_values(self, exp: ActionExpansion) -> np.ndarray:
        """Upper values of tau(b, a, z) for every listed observation of ``exp``."""
        idx = exp.next_index
        obs = exp.observations
        out = np.empty(obs.size)
        for j, z in enumerate(obs):
            pz = exp.obs_prob[z]
            col = exp.joint[:, z]
            rows = np.flatnonzero(col > ZERO_TOL * pz)
            prob = col[rows] / pz
            out[j] = prob @ self.corner[idx[rows]]
            if self.n:
                out[j] += self._sawtooth_gap(idx[rows], prob)
        return out

    def add(self, b: Belief, value: float) -> bool:
        """Insert (b, value) if it lies below corner interpolation."""
        gap = value - self.interpolate(b)
        if not gap < 0:
            return False
        j = self.n
        self._pts.reserve(j + 1)
        if self.gap.size <= j:
            cap = self._pts.capacity
            self.gap = np.resize(self.gap, cap)
            self.nnz = np.resize(self.nnz, cap)
            self.point_values = np.resize(self.point_values, cap)
            self.first = np.resize(self.first, cap)
        self._pts.data[b.index, j] = b.prob
        self.first[j] = b.index[0]
        self.gap[j] = gap
        self.nnz[j] = b.index.size
        self.point_values[j] = value
        self.beliefs.append(b)
        self.n = j + 1
        return True

    def points(self) -> list:
        return list(zip(self.beliefs, self.point_values[: self.n].tolist()))

    def keep(self, cols: np.ndarray):
        cols = np.asarray(cols, dtype=np.int64)
        self._pts.keep(cols, self.n)
        for arr in (self.gap, self.nnz, self.point_values, self.first):
            arr[: cols.size] = arr[cols]
        self.beliefs = [self.beliefs[j] for j in cols]
        self.n = cols.size

    def copy(self) -> "UpperBound":
        out = UpperBound(self.corner, max(self.n, 1))
        out._pts.data[:, : self.n] = self._pts.data[:, : self.n]
        out.gap[: self.n] = self.gap[: self.n]
        out.nnz[: self.n] = self.nnz[: self.n]
        out.point_values[: self.n] = self.point_values[: self.n]
        out.first[: self.n] = self.first[: self.n]
        out.beliefs = list(self.beliefs)
        out.n = self.n
        return out


@dataclass
class InitResult:
    values: np.ndarray
    iterations: int
    residual: float
    converged: bool


@dataclass
class BoundsPair:
    lower: LowerBound
    upper: UpperBound
    #: MDP state-action values, kept for the QMDP baseline
    q_mdp: np.ndarray | None = None
    init_info: dict = field(default_factory=dict)

    def width(self, b: Belief) -> float:
        return self.upper.value(b) - self.lower.value(b)


# --------------------------------------------------------------------------
# queries


def lower_value(lb: LowerBound, b: Belief) -> float:
    return lb.value(b)


def upper_value(ub: UpperBound, b: Belief) -> float:
    return ub.value(b)


def _gather_rows(csr: sp.csr_matrix, rows: np.ndarray):
    """(local row id, column, value) triples for the given CSR rows."""
    indptr = csr.indptr
    starts = indptr[rows]
    lens = indptr[rows + 1] - starts
    total = int(lens.sum())
    owner = np.repeat(np.arange(rows.size), lens)
    pos = np.repeat(starts - (np.cumsum(lens) - lens), lens) + np.arange(total)
    return owner, csr.indices[pos], csr.data[pos]


def _backup_action(model: PomdpModel, lb: LowerBound, b: Belief, exp: ActionExpansion):
    """Masked vector beta_a on supp(b) and its value at b."""
    a = exp.action
    best, _ = lb.child_best(exp)
    idx = exp.next_index
    obs = exp.obs[:, exp.observations]
    cont = (obs * lb._vals.data[idx][:, best]).sum(axis=1)
    owner, cols, data = _gather_rows(model.transition[a], b.index)
    future = np.bincount(owner, weights=data * cont[np.searchsorted(idx, cols)], minlength=b.index.size)
    beta = model.reward[b.index, a] + model.discount * future
    return beta, float(b.prob @ beta)


def backup(model: PomdpModel, lb: LowerBound, b: Belief, expansions=None) -> AlphaVector:
    """Point-based backup at b, computed on supp(b) only."""
    expansions = expand_all(model, b) if expansions is None else expansions
    best_val, best_vec, best_a = -np.inf, None, 0
    for exp in expansions:
        beta, val = _backup_action(model, lb, b, exp)
        if val > best_val:
            best_val, best_vec, best_a = val, beta, exp.action
    return AlphaVector(best_vec, b.index.copy(), best_a)


def lower_update(lb: LowerBound, model: PomdpModel, b: Belief, expansions=None) -> LowerBound:
    lb.add(backup(model, lb, b, expansions), witness=b)
    return lb


def upper_q_values(model: PomdpModel, ub: UpperBound, b: Belief, expansions) -> tuple:
    """Q-values of the upper bound at b plus per-action child values."""
    q = np.empty(len(expansions))
    kids = []
    for exp in expansions:
        child = ub.child_values(exp)
        kids.append(child)
        q[exp.action] = exp.reward + model.discount * float(exp.obs_prob[exp.observations] @ child)
    return q, kids


def lower_q_values(model: PomdpModel, lb: LowerBound, expansions) -> np.ndarray:
    """R(b,a) + gamma sum_z Pr(z|b,a) lower_value(tau(b,a,z)) for every action."""
    q = np.empty(len(expansions))
    for exp in expansions:
        _, vals = lb.child_best(exp)
        q[exp.action] = exp.reward + model.discount * float(vals.sum())
    return q


def upper_update(ub: UpperBound, model: PomdpModel, b: Belief, expansions=None) -> UpperBound:
    """Insert (b, HV(b)) unless the current bound is already at least as tight at b."""
    expansions = expand_all(model, b) if expansions is None else expansions
    q, _ = upper_q_values(model, ub, b, expansions)
    value = float(q.max())
    if value < ub.value(b):
        ub.add(b, value)
    return ub


# --------------------------------------------------------------------------
# initialization


def init_lower_blind(model: PomdpModel, residual_tol: float = RESIDUAL_TOL,
                     max_iters: int = MAX_INIT_ITERS) -> tuple:
    """Blind-policy vectors, one per action, started from the best constant floor.

    Returns (LowerBound, InitResult). The floor is max_a min_s R(s,a)/(1-gamma).
    """
    gamma = model.discount
    R = model.reward
    floor = float(R.min(axis=0).max()) / (1.0 - gamma)
    alpha = np.full((model.num_states, model.num_actions), floor)
    residual, it = np.inf, 0
    while it < max_iters:
        it += 1
        nxt = np.column_stack([R[:, a] + gamma * (model.transition[a] @ alpha[:, a])
                               for a in range(model.num_actions)])
        residual = float(np.abs(nxt - alpha).max())
        alpha = nxt
        if residual < residual_tol:
            break
    lb = LowerBound(model.num_states, capacity=max(16, 2 * model.num_actions))
    for a in range(model.num_actions):
        lb.add(AlphaVector(alpha[:, a].copy(), None, a), blind=True)
    return lb, InitResult(alpha, it, residual, residual < residual_tol)


def init_upper_mdp(model: PomdpModel, residual_tol: float = RESIDUAL_TOL,
                   max_iters: int = MAX_INIT_ITERS) -> tuple:
    """Value iteration on the fully observable MDP from R_max/(1-gamma).

    Returns (corner values, Q table, InitResult).
    """
    gamma = model.discount
    R = model.reward
    v = np.full(model.num_states, model.reward_extrema.r_max / (1.0 - gamma))
    q = np.empty_like(R)
    residual, it = np.inf, 0
    while it < max_iters:
        it += 1
        for a in range(model.num_actions):
            q[:, a] = R[:, a] + gamma * (model.transition[a] @ v)
        nv = q.max(axis=1)
        residual = float(np.abs(nv - v).max())
        v = nv
        if residual < residual_tol:
            break
    if residual >= residual_tol:
        log.warning("MDP value iteration stopped at %d iterations (residual %.3g)", it, residual)
    return v, q, InitResult(q, it, residual, residual < residual_tol)


def _fib_operators(model: PomdpModel) -> list:
    """Per action: (T_a, dense columns O_a[:, z] for observations that can occur)."""
    ops = []
    for a in range(model.num_actions):
        o = model.observation[a].tocsc()
        zs = np.flatnonzero(np.diff(o.indptr))
        cols = o[:, zs].toarray()
        ops.append((model.transition[a], cols))
    return ops


def fib_step(model: PomdpModel, alpha: np.ndarray, ops=None) -> np.ndarray:
    """One application of the fast informed bound update to an S x A array."""
    ops = _fib_operators(model) if ops is None else ops
    S, A = alpha.shape
    out = np.empty_like(alpha)
    for a, (T, cols) in enumerate(ops):
        k = cols.shape[1]
        if k == 1 and np.all(cols[:, 0] == 1.0):
            acc = (T @ alpha).max(axis=1)
        else:
            scaled = (cols[:, :, None] * alpha[:, None, :]).reshape(S, k * A)
            acc = (T @ scaled).reshape(S, k, A).max(axis=2).sum(axis=1)
        out[:, a] = model.reward[:, a] + model.discount * acc
    return out


def init_upper_fib(model: PomdpModel, mdp_q: np.ndarray, residual_tol: float = RESIDUAL_TOL,
                   max_iters: int = MAX_INIT_ITERS) -> tuple:
    """Fast informed bound iterated from the MDP Q table.

    Returns (UpperBound with corners max_a alpha^a, InitResult).
    """
    ops = _fib_operators(model)
    alpha = np.array(mdp_q, dtype=np.float64)
    residual, it = np.inf, 0
    while it < max_iters:
        it += 1
        nxt = fib_step(model, alpha, ops)
        residual = float(np.abs(nxt - alpha).max())
        alpha = nxt
        if residual < residual_tol:
            break
    if residual >= residual_tol:
        log.warning("FIB iteration stopped at %d iterations (residual %.3g)", it, residual)
    return UpperBound(alpha.max(axis=1)), InitResult(alpha, it, residual, residual < residual_tol)


def initialize_bounds(model: PomdpModel, residual_tol: float = RESIDUAL_TOL,
                      max_iters: int = MAX_INIT_ITERS, use_fib: bool = True) -> BoundsPair:
    lb, blind = init_lower_blind(model, residual_tol, max_iters)
    corner, q, mdp = init_upper_mdp(model, residual_tol, max_iters)
    info = {"blind": blind, "mdp": mdp}
    if use_fib:
        ub, fib = init_upper_fib(model, q, residual_tol, max_iters)
        info["fib"] = fib
    else:
        ub = UpperBound(corner)
    return BoundsPair(lb, ub, q, info)


# --------------------------------------------------------------------------
# pruning


def prune_lower(lb: LowerBound, witnesses=None) -> int:
    """Drop vectors that are not the maximizer at any witness belief.

    Witnesses default to the beliefs at which vectors were created. Blind
    vectors are always kept. At each witness the (lowest-index) maximizing
    vector survives, so the bound is unchanged at every witness. Returns the
    number of vectors removed.
    """
    if witnesses is None:
        witnesses = [w for w in lb.witnesses if w is not None]
    n = lb.n
    keep = lb.blind[:n].copy()
    for w in witnesses:
        keep[lb.best(w)[1]] = True
    cols = np.flatnonzero(keep)
    removed = n - cols.size
    if removed:
        lb.keep(cols)
    return removed


def prune_upper(ub: UpperBound) -> int:
    """Remove interior points that no longer lower the sawtooth anywhere.

    Point i is dropped when some surviving point j has supp(b_j) within
    supp(b_i) and max_{s in supp(b_j)} b_j(s)/b_i(s) <= gap_j/gap_i; then j's
    sawtooth term is at least as low as i's at every belief. Returns the
    number of points removed.
    """
    n = ub.n
    if n < 2:
        return 0
    alive = np.ones(n, dtype=bool)
    data = ub._pts.data
    gap = ub.gap[:n]
    nnz = ub.nnz[:n]
    # process the deepest points first so that duplicates keep the oldest copy
    for j in np.argsort(gap, kind="stable"):
        if not alive[j]:
            continue
        sj = ub.beliefs[j]
        cand = np.flatnonzero((data[sj.index[0], :n] > 0) & alive)
        cand = cand[cand != j]
        if cand.size == 0:
            continue
        sub = data[np.ix_(sj.index, cand)]
        contains = (sub > 0).all(axis=0)
        cand, sub = cand[contains], sub[:, contains]
        if cand.size == 0:
            continue
        worst = (sj.prob[:, None] / sub).max(axis=0)
        dominated = worst <= (gap[j] / gap[cand]) * (1 + 1e-12)
        alive[cand[dominated]] = False
    cols = np.flatnonzero(alive)
    removed = n - cols.size
    if removed:
        ub.keep(cols)
    return removed


# --------------------------------------------------------------------------
# policy files


class PolicyFormatError(ValueError):
    """Malformed policy file or a policy written for a different problem."""


def write_policy(path, lb: LowerBound, model: PomdpModel) -> Path:
    path = Path(path)
    lines = [
        "# hsvi policy",
        f"problem {model.fingerprint}",
        f"discount {model.discount:.12g}",
        f"vectors {lb.n}",
    ]
    for j in range(lb.n):
        vec = lb.vector(j)
        action = model.action_label(vec.action).replace(" ", "_")
        mask = "full" if vec.mask is None else ",".join(map(str, vec.mask.tolist()))
        lines.append(f"{action} {'blind' if lb.blind[j] else 'point'} {mask}")
        # repr precision so that reloaded vectors are bit-identical
        lines.append(" ".join(f"{x:.17g}" for x in vec.values))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_policy(path, model: PomdpModel, check_problem: bool = True) -> LowerBound:
    lines = Path(path).read_text().splitlines()
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    header = {}
    for ln in lines[:3]:
        key, _, val = ln.partition(" ")
        header[key] = val
    if set(header) != {"problem", "discount", "vectors"}:
        raise PolicyFormatError("policy header must list problem, discount and vectors")
    if check_problem and header["problem"] != model.fingerprint:
        raise PolicyFormatError(
            f"policy was written for problem {header['problem']}, not {model.fingerprint}")
    count = int(header["vectors"])
    body = lines[3:]
    if len(body) != 2 * count:
        raise PolicyFormatError(f"expected {count} vector records, found {len(body) // 2}")
    labels = [model.action_label(a).replace(" ", "_") for a in range(model.num_actions)]
    lb = LowerBound(model.num_states, capacity=max(count, 1))
    for k in range(count):
        action, kind, mask = body[2 * k].split()
        values = np.array(body[2 * k + 1].split(), dtype=np.float64)
        mask_idx = None if mask == "full" else np.array(mask.split(","), dtype=np.int64)
        expected = model.num_states if mask_idx is None else mask_idx.size
        if values.size != expected:
            raise PolicyFormatError(f"vector {k}: {values.size} values for a mask of {expected}")
        lb.add(AlphaVector(values, mask_idx, labels.index(action)), blind=kind == "blind")
    return lb
