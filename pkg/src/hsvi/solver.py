"""HSVI2 search: trials from b0 guided by the upper bound, updates on the way back."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import (
    BoundsPair, initialize_bounds, lower_update, prune_lower, prune_upper,
    upper_q_values, upper_update,
)
from .model import Belief, PomdpModel, expand_all

log = logging.getLogger(__name__)

__all__ = [
    "SolveParams", "SolveTrace", "TraceRecord", "SolveResult", "solve", "explore",
    "select_action", "select_observation", "default_max_depth", "write_trace_csv", "read_trace_csv",
]

TRACE_COLUMNS = ("time_s", "lower_b0", "upper_b0", "num_alpha", "num_points", "trials", "updates")


def default_max_depth(model: PomdpModel, epsilon: float) -> int:
    """Depth beyond which eps * gamma^-t exceeds any possible bound width."""
    gamma = model.discount
    span = model.reward_extrema.r_max - model.reward_extrema.r_min
    if gamma == 0.0 or span <= 0:
        return 1
    depth = math.log(epsilon * (1.0 - gamma) / span) / math.log(gamma)
    return max(1, math.ceil(depth)) + 10


@dataclass
class SolveParams:
    epsilon: float = 1e-3
    time_budget: float | None = None
    max_trials: int | None = None
    max_depth: int | None = None
    #: prune a bound once its set has grown by this factor since the last prune
    prune_growth_factor: float = 1.1
    seed: int = 0
    #: pick the observation uniformly at random instead of by weighted excess (test baseline)
    random_observations: bool = False
    init_residual_tol: float = 1e-3
    init_max_iters: int = 500
    trace_interval: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.prune_growth_factor <= 1.0:
            raise ValueError("prune_growth_factor must exceed 1")


@dataclass(frozen=True)
class TraceRecord:
    time_s: float
    lower_b0: float
    upper_b0: float
    num_alpha: int
    num_points: int
    trials: int
    updates: int


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def __len__(self):
        return len(self.records)

    @property
    def last(self) -> TraceRecord:
        return self.records[-1]


@dataclass
class SolveResult:
    bounds: BoundsPair
    trace: SolveTrace
    reason: str
    trials: int
    updates: int
    elapsed: float

    @property
    def lower(self) -> float:
        return self.trace.last.lower_b0

    @property
    def upper(self) -> float:
        return self.trace.last.upper_b0

    def __iter__(self):
        # allows ``bounds, trace, reason = solve(...)``
        return iter((self.bounds, self.trace, self.reason))


def select_action(model: PomdpModel, bounds: BoundsPair, b: Belief, expansions=None) -> int:
    """IE-MAX: the action with the largest upper-bound Q-value (lowest index on ties)."""
    expansions = expand_all(model, b) if expansions is None else expansions
    q, _ = upper_q_values(model, bounds.upper, b, expansions)
    return int(np.argmax(q))


def _weighted_excess(model, bounds, exp, epsilon, t, upper_children=None):
    obs = exp.observations
    upper = bounds.upper.child_values(exp) if upper_children is None else upper_children
    _, lower_mass = bounds.lower.child_best(exp)
    pz = exp.obs_prob[obs]
    width = upper - lower_mass / pz
    threshold = epsilon * model.discount ** (-(t + 1))
    return pz * (width - threshold), width


def select_observation(model: PomdpModel, bounds: BoundsPair, b: Belief, a_star: int,
                       epsilon: float, t: int, expansion=None):
    """Observation maximizing Pr(z|b,a*) * excess(tau(b,a*,z), t+1), or None if none is positive."""
    exp = expand_all(model, b)[a_star] if expansion is None else expansion
    weighted, _ = _weighted_excess(model, bounds, exp, epsilon, t)
    k = int(np.argmax(weighted))
    if not weighted[k] > 0:
        return None
    return int(exp.observations[k])


class _Search:
    def __init__(self, model: PomdpModel, bounds: BoundsPair, params: SolveParams):
        self.model = model
        self.bounds = bounds
        self.params = params
        self.max_depth = params.max_depth or default_max_depth(model, params.epsilon)
        self.updates = 0
        self.rng = np.random.default_rng(params.seed)
        self.deadline = None
        self.on_progress = None

    def out_of_time(self) -> bool:
        return self.deadline is not None and time.perf_counter() >= self.deadline

    def explore(self, b: Belief, t: int = 0):
        """One trial: descend greedily, then update every visited node bottom-up."""
        model, bounds, eps = self.model, self.bounds, self.params.epsilon
        gamma = model.discount
        path = []
        width = bounds.width(b)
        while True:
            threshold = eps * gamma ** (-t) if gamma > 0 else (eps if t == 0 else math.inf)
            if width <= threshold or t >= self.max_depth:
                break
            exps = expand_all(model, b)
            q, kids = upper_q_values(model, bounds.upper, b, exps)
            a_star = int(np.argmax(q))
            path.append((b, exps))
            exp = exps[a_star]
            if gamma == 0.0 or exp.observations.size == 0:
                break
            weighted, widths = _weighted_excess(model, bounds, exp, eps, t, kids[a_star])
            if self.params.random_observations:
                k = int(self.rng.choice(exp.observations.size, p=exp.obs_prob[exp.observations]))
                if not weighted[k] > 0:
                    break
            else:
                k = int(np.argmax(weighted))
                if not weighted[k] > 0:
                    break
            if self.out_of_time():
                break
            b = exp.child(exp.observations[k])
            width = float(widths[k])
            t += 1
        for node, exps in reversed(path):
            # skipping updates leaves both bounds valid, so the deadline wins
            if self.out_of_time():
                break
            lower_update(bounds.lower, model, node, exps)
            upper_update(bounds.upper, model, node, exps)
            self.updates += 1
            if self.on_progress is not None:
                self.on_progress()
        return len(path)


def explore(model: PomdpModel, bounds: BoundsPair, b: Belief, epsilon: float, t: int = 0,
            max_depth: int | None = None) -> int:
    """Run one exploration trial from b at depth t; returns the number of nodes updated."""
    search = _Search(model, bounds, SolveParams(epsilon=epsilon, max_depth=max_depth))
    return search.explore(b, t)


def solve(model: PomdpModel, params: SolveParams | None = None, bounds: BoundsPair | None = None,
          callback=None) -> SolveResult:
    """Run HSVI2 until the width at b0 is at most epsilon or a budget runs out.

    ``callback(elapsed, bounds)`` is invoked after every trial; returning True
    stops the search.
    """
    params = params or SolveParams()
    start = time.perf_counter()
    if bounds is None:
        bounds = initialize_bounds(model, params.init_residual_tol, params.init_max_iters)
    search = _Search(model, bounds, params)
    if params.time_budget is not None:
        search.deadline = start + params.time_budget
    b0 = model.initial_belief
    trace = SolveTrace()
    state = {"trials": 0, "last": -math.inf, "lo": -math.inf, "hi": math.inf}

    def record(force=False):
        now = time.perf_counter()
        if not force and now - state["last"] < params.trace_interval:
            return
        state["last"] = now
        # bounds at b0 are monotone mathematically; clip float noise from pruning
        state["lo"] = max(state["lo"], bounds.lower.value(b0))
        state["hi"] = min(state["hi"], bounds.upper.value(b0))
        trace.append(TraceRecord(now - start, state["lo"], state["hi"], len(bounds.lower),
                                 len(bounds.upper), state["trials"], search.updates))

    search.on_progress = record
    record(force=True)
    last_prune = [max(len(bounds.lower), 1), max(len(bounds.upper), 1)]
    reason = "converged"
    while True:
        if bounds.width(b0) <= params.epsilon:
            reason = "converged"
            break
        if params.max_trials is not None and state["trials"] >= params.max_trials:
            reason = "max_trials"
            break
        if search.out_of_time():
            reason = "budget"
            break
        search.explore(b0, 0)
        state["trials"] += 1
        if search.out_of_time():
            continue
        if len(bounds.lower) >= params.prune_growth_factor * last_prune[0]:
            prune_lower(bounds.lower, [w for w in bounds.lower.witnesses if w is not None] + [b0])
            last_prune[0] = max(len(bounds.lower), 1)
        if len(bounds.upper) >= params.prune_growth_factor * last_prune[1]:
            prune_upper(bounds.upper)
            last_prune[1] = max(len(bounds.upper), 1)
        record(force=True)
        if callback is not None and callback(time.perf_counter() - start, bounds):
            reason = "callback"
            break
        if log.isEnabledFor(logging.DEBUG):
            r = trace.last
            log.debug("trial %d: [%.6g, %.6g] |G|=%d |U|=%d", r.trials, r.lower_b0, r.upper_b0,
                      r.num_alpha, r.num_points)
    record(force=True)
    elapsed = time.perf_counter() - start
    log.info("solve finished (%s) after %d trials, %.2fs: [%.6g, %.6g]", reason, state["trials"],
             elapsed, trace.last.lower_b0, trace.last.upper_b0)
    return SolveResult(bounds, trace, reason, state["trials"], search.updates, elapsed)


def write_trace_csv(trace: SolveTrace, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in trace.records:
            w.writerow([f"{r.time_s:.6f}", f"{r.lower_b0:.12g}", f"{r.upper_b0:.12g}",
                        r.num_alpha, r.num_points, r.trials, r.updates])
    return path


def read_trace_csv(path) -> SolveTrace:
    trace = SolveTrace()
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            trace.append(TraceRecord(float(row["time_s"]), float(row["lower_b0"]), float(row["upper_b0"]),
                                     int(row["num_alpha"]), int(row["num_points"]), int(row["trials"]),
                                     int(row["updates"])))
    return trace
