"""POMDP model definition, sparse beliefs and belief dynamics.

Transitions are stored per action as CSR matrices ``T[a][s, s'] = Pr(s'|s,a)``
and observations per action as CSR matrices ``O[a][s', z] = Pr(z|s',a)``.
Beliefs are sparse: a sorted index array plus the matching probabilities.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

#: Row sums of T and O must equal one within this tolerance.
STOCHASTIC_TOL = 1e-9
#: Probabilities below this magnitude are dropped from beliefs.
ZERO_TOL = 1e-12

# dense per-action observation caches are built when S*Z*A stays below this
_DENSE_OBS_LIMIT = 20_000_000


class ModelError(ValueError):
    """Raised when a model violates its structural invariants."""


class StochasticityError(ModelError):
    """A transition or observation row does not sum to one."""

    def __init__(self, kind: str, action: int, row: int, total: float, labels: str = ""):
        self.kind = kind
        self.action = action
        self.row = row
        self.total = total
        where = labels or f"(s={row}, a={action})"
        super().__init__(f"{kind} row {where} sums to {total:.12g}, expected 1")


class ImpossibleObservation(ValueError):
    """The requested observation has zero probability under (b, a)."""


class Belief:
    """Sparse probability distribution over states.

    ``index`` holds the support in strictly increasing order and ``prob`` the
    matching strictly positive probabilities.
    """

    __slots__ = ("index", "prob", "_key")

    def __init__(self, index, prob, *, validate: bool = True):
        index = np.asarray(index, dtype=np.int64)
        prob = np.asarray(prob, dtype=np.float64)
        if validate:
            if index.ndim != 1 or index.shape != prob.shape:
                raise ValueError("index and prob must be 1-D arrays of equal length")
            if index.size == 0:
                raise ValueError("belief must have nonempty support")
            if np.any(np.diff(index) <= 0):
                order = np.argsort(index, kind="stable")
                index, prob = index[order], prob[order]
                if np.any(np.diff(index) == 0):
                    raise ValueError("duplicate state index in belief")
            if np.any(prob <= 0):
                raise ValueError("belief entries must be strictly positive")
            if abs(prob.sum() - 1.0) > STOCHASTIC_TOL:
                raise ValueError(f"belief sums to {prob.sum():.12g}")
        self.index = index
        self.prob = prob
        self._key = None

    @classmethod
    def from_dense(cls, vec) -> "Belief":
        vec = np.asarray(vec, dtype=np.float64)
        return _normalized(np.arange(vec.size), vec)

    @classmethod
    def point(cls, state: int) -> "Belief":
        return cls(np.array([state]), np.array([1.0]), validate=False)

    @classmethod
    def uniform(cls, num_states: int, states: Sequence[int] | None = None) -> "Belief":
        idx = np.arange(num_states) if states is None else np.unique(np.asarray(states, dtype=np.int64))
        return cls(idx, np.full(idx.size, 1.0 / idx.size), validate=False)

    @property
    def support(self) -> np.ndarray:
        return self.index

    def to_dense(self, num_states: int) -> np.ndarray:
        out = np.zeros(num_states)
        out[self.index] = self.prob
        return out

    def dot(self, vec: np.ndarray) -> float:
        """Dot product with a dense vector of length num_states."""
        return float(self.prob @ vec[self.index])

    def l1_distance(self, other: "Belief") -> float:
        return sparse_l1(self.index, self.prob, other.index, other.prob)

    def key(self) -> bytes:
        """Exact hashable identity of the stored arrays."""
        if self._key is None:
            self._key = self.index.tobytes() + b"|" + self.prob.tobytes()
        return self._key

    def __len__(self) -> int:
        return int(self.index.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Belief):
            return NotImplemented
        return np.array_equal(self.index, other.index) and np.array_equal(self.prob, other.prob)

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        if self.index.size <= 8:
            body = ", ".join(f"{i}: {p:.6g}" for i, p in zip(self.index, self.prob))
        else:
            body = f"{self.index.size} states"
        return f"Belief({{{body}}})"


def _normalized(index: np.ndarray, mass: np.ndarray) -> Belief:
    """Drop round-off entries and normalize unnormalized sparse mass."""
    total = mass.sum()
    if total <= 0:
        raise ValueError("cannot normalize zero mass")
    prob = mass / total
    keep = prob >= ZERO_TOL
    if not keep.all():
        index, prob = index[keep], prob[keep]
        prob = prob / prob.sum()
    return Belief(index, prob, validate=False)


# --------------------------------------------------------------------------
# sparse kernels


def sparse_dot(ia: np.ndarray, va: np.ndarray, ib: np.ndarray, vb: np.ndarray) -> float:
    """Dot product of two sparse vectors with sorted indices."""
    common, pa, pb = np.intersect1d(ia, ib, assume_unique=True, return_indices=True)
    if common.size == 0:
        return 0.0
    return float(va[pa] @ vb[pb])


def sparse_l1(ia: np.ndarray, va: np.ndarray, ib: np.ndarray, vb: np.ndarray) -> float:
    """1-norm distance between two sparse vectors with sorted indices."""
    _, pa, pb = np.intersect1d(ia, ib, assume_unique=True, return_indices=True)
    shared = np.abs(va[pa] - vb[pb]).sum()
    only_a = np.abs(va).sum() - np.abs(va[pa]).sum()
    only_b = np.abs(vb).sum() - np.abs(vb[pb]).sum()
    return float(shared + only_a + only_b)


def weighted_row_sum(matrix: sp.csr_matrix, rows: np.ndarray, weights: np.ndarray):
    """Sparse ``weights @ matrix[rows]`` returned as (sorted index, values)."""
    indptr = matrix.indptr
    starts = indptr[rows]
    lens = indptr[rows + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    base = np.repeat(starts - (np.cumsum(lens) - lens), lens)
    pos = base + np.arange(total)
    cols = matrix.indices[pos]
    vals = matrix.data[pos] * np.repeat(weights, lens)
    uniq, inv = np.unique(cols, return_inverse=True)
    return uniq.astype(np.int64), np.bincount(inv, weights=vals, minlength=uniq.size)


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class RewardExtrema:
    r_min: float
    r_max: float


@dataclass(frozen=True, eq=False)
class PomdpModel:
    """Immutable sparse POMDP.

    ``transition[a]`` is an S x S CSR matrix, ``observation[a]`` an S x Z CSR
    matrix indexed by the *next* state, ``reward`` a dense S x A array.
    """

    num_states: int
    num_actions: int
    num_observations: int
    transition: tuple
    observation: tuple
    reward: np.ndarray
    discount: float
    initial_belief: Belief
    state_labels: tuple | None = None
    action_labels: tuple | None = None
    observation_labels: tuple | None = None
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        S, A, Z = self.num_states, self.num_actions, self.num_observations
        if min(S, A, Z) < 1:
            raise ModelError("model needs at least one state, action and observation")
        if not 0.0 < self.discount < 1.0:
            if self.discount != 0.0 or not self.metadata.get("allow_zero_discount", False):
                raise ModelError(f"discount must lie in (0, 1), got {self.discount}")
        trans = tuple(sp.csr_matrix(t, dtype=np.float64, copy=True) for t in self.transition)
        obs = tuple(sp.csr_matrix(o, dtype=np.float64, copy=True) for o in self.observation)
        if len(trans) != A or len(obs) != A:
            raise ModelError("need one transition and one observation matrix per action")
        for a in range(A):
            for kind, mat, shape in (("T", trans[a], (S, S)), ("O", obs[a], (S, Z))):
                if mat.shape != shape:
                    raise ModelError(f"{kind}[{a}] has shape {mat.shape}, expected {shape}")
                mat.eliminate_zeros()
                mat.sort_indices()
                if mat.data.size and mat.data.min() < 0:
                    raise ModelError(f"{kind}[{a}] has negative entries")
                sums = np.asarray(mat.sum(axis=1)).ravel()
                bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOL)
                if bad.size:
                    row = int(bad[0])
                    raise StochasticityError(kind, a, row, float(sums[row]), self._row_label(row, a))
                mat.data.setflags(write=False)
        reward = np.array(self.reward, dtype=np.float64)
        if reward.shape != (S, A):
            raise ModelError(f"reward has shape {reward.shape}, expected {(S, A)}")
        if not np.all(np.isfinite(reward)):
            raise ModelError("reward entries must be finite")
        reward.setflags(write=False)
        b0 = self.initial_belief
        if not isinstance(b0, Belief):
            b0 = Belief.from_dense(b0)
        if b0.index.size and b0.index[-1] >= S:
            raise ModelError("initial belief refers to a state outside the model")
        object.__setattr__(self, "transition", trans)
        object.__setattr__(self, "observation", obs)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "initial_belief", b0)
        object.__setattr__(self, "discount", float(self.discount))

    def _row_label(self, row: int, action: int) -> str:
        s = self.state_labels[row] if self.state_labels else str(row)
        a = self.action_labels[action] if self.action_labels else str(action)
        return f"(s={s}, a={a})"

    @cached_property
    def reward_extrema(self) -> RewardExtrema:
        return RewardExtrema(float(self.reward.min()), float(self.reward.max()))

    @cached_property
    def obs_dense(self) -> tuple | None:
        """Per-action dense S x Z observation arrays, when small enough."""
        if self.num_states * self.num_observations * self.num_actions > _DENSE_OBS_LIMIT:
            return None
        out = []
        for o in self.observation:
            arr = o.toarray()
            arr.setflags(write=False)
            out.append(arr)
        return tuple(out)

    @cached_property
    def terminal_states(self) -> np.ndarray:
        """States that are absorbing with zero reward under every action."""
        cand = np.all(self.reward == 0.0, axis=1)
        for t in self.transition:
            diag = t.diagonal()
            cand &= np.abs(diag - 1.0) <= STOCHASTIC_TOL
        return np.flatnonzero(cand)

    def obs_rows(self, action: int, states: np.ndarray) -> np.ndarray:
        """Dense |states| x Z block of Pr(z|s',a)."""
        dense = self.obs_dense
        if dense is not None:
            return dense[action][states]
        return self.observation[action][states].toarray()

    def with_discount(self, discount: float) -> "PomdpModel":
        """Copy of the model with a different discount factor."""
        meta = dict(self.metadata)
        if discount == 0.0:
            meta["allow_zero_discount"] = True
        return PomdpModel(
            self.num_states, self.num_actions, self.num_observations,
            self.transition, self.observation, self.reward, discount,
            self.initial_belief, self.state_labels, self.action_labels,
            self.observation_labels, self.name, meta,
        )

    def with_initial_belief(self, belief: Belief) -> "PomdpModel":
        return PomdpModel(
            self.num_states, self.num_actions, self.num_observations,
            self.transition, self.observation, self.reward, self.discount,
            belief, self.state_labels, self.action_labels,
            self.observation_labels, self.name, dict(self.metadata),
        )

    def action_index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            return int(label)
        return self.action_labels.index(label)

    def action_label(self, a: int) -> str:
        return self.action_labels[a] if self.action_labels else str(a)

    @cached_property
    def fingerprint(self) -> str:
        """Stable hash of the problem data (used to pair policies with models)."""
        h = hashlib.sha256()
        h.update(np.array([self.num_states, self.num_actions, self.num_observations], dtype=np.int64).tobytes())
        h.update(np.float64(self.discount).tobytes())
        for mats in (self.transition, self.observation):
            for m in mats:
                h.update(m.indptr.astype(np.int64).tobytes())
                h.update(m.indices.astype(np.int64).tobytes())
                h.update(np.round(m.data, 12).tobytes())
        h.update(np.round(self.reward, 12).tobytes())
        h.update(self.initial_belief.index.tobytes())
        h.update(np.round(self.initial_belief.prob, 12).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self) -> str:
        return (f"PomdpModel({self.name or 'unnamed'}: {self.num_states}s "
                f"{self.num_actions}a {self.num_observations}o, discount={self.discount})")


def make_model(transition, observation, reward, discount, initial_belief=None, **kwargs) -> PomdpModel:
    """Build a model from dense or sparse arrays.

    ``transition`` is indexed [a][s][s'], ``observation`` [a][s'][z] and
    ``reward`` [s][a]. The initial belief defaults to uniform.
    """
    trans = [sp.csr_matrix(np.asarray(t, dtype=np.float64)) if not sp.issparse(t) else t for t in transition]
    obs = [sp.csr_matrix(np.asarray(o, dtype=np.float64)) if not sp.issparse(o) else o for o in observation]
    S = trans[0].shape[0]
    Z = obs[0].shape[1]
    if initial_belief is None:
        initial_belief = Belief.uniform(S)
    elif not isinstance(initial_belief, Belief):
        initial_belief = Belief.from_dense(initial_belief)
    meta = dict(kwargs.pop("metadata", {}))
    if discount == 0.0:
        meta["allow_zero_discount"] = True
    return PomdpModel(S, len(trans), Z, tuple(trans), tuple(obs), np.asarray(reward, dtype=np.float64),
                      discount, initial_belief, metadata=meta, **kwargs)


# --------------------------------------------------------------------------
# belief dynamics


class ActionExpansion:
    """Successor structure of a belief under one action.

    ``next_index`` is the support of the predicted next-state distribution
    ``mass``, ``obs[i, z] = Pr(z | next_index[i], a)`` and
    ``joint[i, z] = Pr(s'=next_index[i], z | b, a)``. Only observations with
    probability above ZERO_TOL are listed in ``observations``.
    """

    __slots__ = ("action", "next_index", "mass", "obs", "joint", "obs_prob", "observations", "reward", "_children")

    def __init__(self, action, next_index, mass, obs, obs_prob, reward):
        self.action = action
        self.next_index = next_index
        self.mass = mass
        self.obs = obs
        self.joint = obs * mass[:, None]
        self.obs_prob = obs_prob
        self.observations = np.flatnonzero(obs_prob > ZERO_TOL)
        self.reward = reward
        self._children = {}

    def child(self, z: int) -> Belief:
        z = int(z)
        b = self._children.get(z)
        if b is None:
            col = self.joint[:, z]
            nz = col > 0
            b = _normalized(self.next_index[nz], col[nz])
            self._children[z] = b
        return b

    def children(self) -> list:
        return [(int(z), float(self.obs_prob[z]), self.child(z)) for z in self.observations]

    @property
    def child_masks(self) -> np.ndarray:
        """Boolean |next| x |observations| support indicator of each child."""
        return self.joint[:, self.observations] > 0


def predict(model: PomdpModel, b: Belief, a: int):
    """Next-state distribution sum_s Pr(s'|s,a) b(s) as sparse arrays."""
    return weighted_row_sum(model.transition[a], b.index, b.prob)


def expand(model: PomdpModel, b: Belief, a: int) -> ActionExpansion:
    idx, mass = predict(model, b, a)
    keep = mass > 0
    idx, mass = idx[keep], mass[keep]
    obs = model.obs_rows(a, idx)
    obs_prob = mass @ obs
    reward = float(b.prob @ model.reward[b.index, a])
    return ActionExpansion(a, idx, mass, obs, obs_prob, reward)


def expand_all(model: PomdpModel, b: Belief) -> list:
    return [expand(model, b, a) for a in range(model.num_actions)]


def observation_probability(model: PomdpModel, b: Belief, a: int) -> np.ndarray:
    """Distribution Pr(z|b,a) over all observations."""
    return expand(model, b, a).obs_prob


def belief_update(model: PomdpModel, b: Belief, a: int, z: int) -> Belief:
    """Posterior tau(b, a, z) via Bayes rule with explicit normalization."""
    idx, mass = predict(model, b, a)
    obs_col = model.obs_rows(a, idx)[:, z]
    joint = mass * obs_col
    total = joint.sum()
    if total <= ZERO_TOL:
        raise ImpossibleObservation(f"Pr(z={z} | b, a={a}) = {total:.3g}")
    nz = joint > 0
    return _normalized(idx[nz], joint[nz])


def belief_reward(model: PomdpModel, b: Belief, a: int) -> float:
    return float(b.prob @ model.reward[b.index, a])


def reachable_children(model: PomdpModel, b: Belief, a: int) -> list:
    """List of (z, Pr(z|b,a), tau(b,a,z)) over possible observations."""
    return expand(model, b, a).children()
