"""Policy extraction and Monte Carlo evaluation."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import BoundsPair, LowerBound, init_upper_mdp, initialize_bounds, lower_q_values
from .model import Belief, PomdpModel, belief_update, expand_all
from .solver import SolveParams, solve

log = logging.getLogger(__name__)

__all__ = [
    "Policy", "LookaheadPolicy", "AlphaActionPolicy", "QmdpPolicy", "BlindPolicy",
    "policy_action", "EvalReport", "simulate", "required_horizon", "reward_vs_time",
    "DEFAULT_HORIZON",
]

DEFAULT_HORIZON = 250


class Policy:
    """Maps beliefs to actions. Subclasses implement ``_choose``; results are cached per belief."""

    name = "policy"

    def __init__(self):
        self._cache = {}

    def action(self, model: PomdpModel, b: Belief) -> int:
        key = b.key()
        a = self._cache.get(key)
        if a is None:
            a = int(self._choose(model, b))
            if len(self._cache) < 200_000:
                self._cache[key] = a
        return a

    def _choose(self, model, b):
        raise NotImplementedError


class LookaheadPolicy(Policy):
    """One-step lookahead on a frozen copy of a lower bound."""

    name = "lookahead"

    def __init__(self, lower: LowerBound, copy: bool = True):
        super().__init__()
        self.lower = lower.copy() if copy else lower

    def _choose(self, model, b):
        return np.argmax(lower_q_values(model, self.lower, expand_all(model, b)))


class AlphaActionPolicy(Policy):
    """Action attached to the maximizing alpha vector at b."""

    name = "alpha"

    def __init__(self, lower: LowerBound, copy: bool = True):
        super().__init__()
        self.lower = lower.copy() if copy else lower

    def _choose(self, model, b):
        return self.lower.actions[self.lower.best(b)[1]]


class QmdpPolicy(Policy):
    name = "qmdp"

    def __init__(self, q: np.ndarray):
        super().__init__()
        self.q = np.asarray(q, dtype=np.float64)

    @classmethod
    def from_model(cls, model: PomdpModel, residual_tol: float = 1e-6, max_iters: int = 5000):
        _, q, _ = init_upper_mdp(model, residual_tol, max_iters)
        return cls(q)

    def _choose(self, model, b):
        return np.argmax(b.prob @ self.q[b.index])


class BlindPolicy(Policy):
    name = "blind"

    def __init__(self, action: int):
        super().__init__()
        self.fixed = int(action)

    def action(self, model, b):
        return self.fixed


def policy_action(policy: Policy, model: PomdpModel, b: Belief) -> int:
    return policy.action(model, b)


@dataclass
class EvalReport:
    episodes: int
    mean: float
    sd: float
    half_width: float
    seeds: list = field(repr=False)
    returns: np.ndarray = field(repr=False)
    horizon: int = DEFAULT_HORIZON
    policy: str = ""

    def to_dict(self) -> dict:
        return {
            "policy": self.policy, "episodes": self.episodes, "horizon": self.horizon,
            "mean": self.mean, "sd": self.sd, "ci95": self.half_width,
            "seeds": [int(s) for s in self.seeds],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "seed", "discounted_return"])
            for i, (s, r) in enumerate(zip(self.seeds, self.returns)):
                w.writerow([i, int(s), f"{r:.12g}"])
        return path


def required_horizon(model: PomdpModel, tol: float = 0.01) -> int:
    """Smallest horizon whose discounted tail bound is below ``tol``."""
    span = model.reward_extrema.r_max - model.reward_extrema.r_min
    gamma = model.discount
    if span <= 0 or gamma == 0:
        return 1
    return max(1, math.ceil(math.log(tol * (1 - gamma) / span) / math.log(gamma)))


def _sample(indices: np.ndarray, probs: np.ndarray, rng) -> int:
    u = rng.random() * probs.sum()
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return int(indices[min(k, indices.size - 1)])


class _PosteriorCache:
    """Memoized belief updates; beliefs recur often across episodes."""

    def __init__(self, model, limit=200_000):
        self.model = model
        self.limit = limit
        self.table = {}

    def __call__(self, b, a, z):
        key = (b.key(), a, z)
        post = self.table.get(key)
        if post is None:
            post = belief_update(self.model, b, a, z)
            if len(self.table) < self.limit:
                self.table[key] = post
        return post


def _run_episode(policy, model, horizon, rng, terminal, end_on_positive, update):
    b = model.initial_belief
    s = _sample(b.index, b.prob, rng)
    ret, disc = 0.0, 1.0
    for _ in range(horizon):
        if terminal[s]:
            break
        a = policy.action(model, b)
        r = model.reward[s, a]
        ret += disc * r
        disc *= model.discount
        T = model.transition[a]
        lo, hi = T.indptr[s], T.indptr[s + 1]
        s = _sample(T.indices[lo:hi], T.data[lo:hi], rng)
        O = model.observation[a]
        lo, hi = O.indptr[s], O.indptr[s + 1]
        z = _sample(O.indices[lo:hi], O.data[lo:hi], rng)
        if end_on_positive and r > 0:
            break
        b = update(b, a, z)
    return ret


def simulate(policy: Policy, model: PomdpModel, episodes: int = 100, horizon: int = DEFAULT_HORIZON,
             seed: int = 0, end_on_positive_reward: bool = False) -> EvalReport:
    """Average discounted return of ``policy`` from b0 over independent episodes.

    Each episode draws its own seed from ``seed``, so reports are reproducible
    and individual episodes can be replayed. Episodes stop at absorbing
    zero-reward states, after ``horizon`` steps, or (optionally) right after
    the first strictly positive reward.
    """
    if episodes < 1:
        raise ValueError("episodes must be positive")
    if horizon < required_horizon(model):
        log.warning("horizon %d leaves a discounted tail above 0.01", horizon)
    seeds = np.random.SeedSequence(seed).generate_state(episodes).tolist()
    terminal = np.zeros(model.num_states, dtype=bool)
    terminal[model.terminal_states] = True
    update = _PosteriorCache(model)
    returns = np.array([
        _run_episode(policy, model, horizon, np.random.default_rng(s), terminal, end_on_positive_reward, update)
        for s in seeds
    ])
    sd = float(returns.std(ddof=1)) if episodes > 1 else 0.0
    return EvalReport(episodes, float(returns.mean()), sd, 1.96 * sd / math.sqrt(episodes), seeds,
                      returns, horizon, policy.name)


def reward_vs_time(model: PomdpModel, params: SolveParams, checkpoints, episodes: int = 100,
                   horizon: int = DEFAULT_HORIZON, seed: int = 0, end_on_positive_reward: bool = False):
    """Solve while snapshotting the lower bound at the given wallclock times.

    Returns a list of dict rows with keys time_s, mean_reward, ci, lower_b0,
    upper_b0. The first checkpoint at or below zero is the initialized bound.
    Snapshots are evaluated after the solve finishes.
    """
    b0 = model.initial_belief
    bounds = initialize_bounds(model, params.init_residual_tol, params.init_max_iters)
    pending = sorted(float(c) for c in checkpoints)
    snaps = []

    def take(elapsed, bd: BoundsPair):
        snaps.append((elapsed, bd.lower.copy(), bd.lower.value(b0), bd.upper.value(b0)))

    while pending and pending[0] <= 0:
        pending.pop(0)
        take(0.0, bounds)

    def callback(elapsed, bd):
        while pending and elapsed >= pending[0]:
            pending.pop(0)
            take(elapsed, bd)
        return False

    result = solve(model, params, bounds=bounds, callback=callback)
    if not snaps or snaps[-1][0] < result.elapsed:
        take(result.elapsed, result.bounds)
    rows = []
    lo, hi = -math.inf, math.inf
    for elapsed, lower, lb0, ub0 in snaps:
        rep = simulate(LookaheadPolicy(lower, copy=False), model, episodes, horizon, seed,
                       end_on_positive_reward)
        lo, hi = max(lo, lb0), min(hi, ub0)
        rows.append({"time_s": elapsed, "mean_reward": rep.mean, "ci": rep.half_width,
                     "lower_b0": lo, "upper_b0": hi})
    return rows
