"""Problem ingestion: Cassandra ``.pomdp`` files, generators and the benchmark registry."""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from .model import Belief, ModelError, PomdpModel, STOCHASTIC_TOL

__all__ = [
    "PomdpSyntaxError", "MissingBlock", "InvalidParams",
    "parse_pomdp", "load_pomdp", "serialize_pomdp", "write_pomdp",
    "generate_rocksample", "generate_tag", "ROCKSAMPLE_LAYOUTS",
    "BenchmarkSpec", "BENCHMARKS", "load_benchmark", "corpus_dir",
]


class PomdpSyntaxError(SyntaxError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.lineno = self.line = line
        self.offset = self.column = column

    def __str__(self) -> str:
        return self.msg


class MissingBlock(ValueError):
    """A required section of the problem file is absent."""


class InvalidParams(ValueError):
    """Generator parameters out of range."""


# --------------------------------------------------------------------------
# Cassandra format parser

_TOKEN_RE = re.compile(r":|[^\s:]+")
_KEYWORDS = {"discount", "values", "states", "actions", "observations", "start", "T", "O", "R"}


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


class _TokenStream:
    def __init__(self, text: str):
        toks = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0]
            for m in _TOKEN_RE.finditer(line):
                toks.append((m.group(0), lineno, m.start() + 1))
        self.toks = toks
        self.pos = 0

    def peek(self, k: int = 0):
        i = self.pos + k
        return self.toks[i][0] if i < len(self.toks) else None

    def where(self):
        if self.pos < len(self.toks):
            return self.toks[self.pos][1:]
        if self.toks:
            return self.toks[-1][1], self.toks[-1][2] + len(self.toks[-1][0])
        return 1, 1

    def next(self, what: str = "token") -> str:
        if self.pos >= len(self.toks):
            line, col = self.where()
            raise PomdpSyntaxError(f"unexpected end of input, expected {what}", line, col)
        tok = self.toks[self.pos][0]
        self.pos += 1
        return tok

    def expect(self, tok: str):
        line, col = self.where()
        got = self.next(repr(tok))
        if got != tok:
            raise PomdpSyntaxError(f"expected {tok!r}, got {got!r}", line, col)

    def error(self, message: str) -> PomdpSyntaxError:
        line, col = self.where()
        return PomdpSyntaxError(message, line, col)

    def number(self) -> float:
        line, col = self.where()
        tok = self.next("number")
        try:
            return float(tok)
        except ValueError:
            raise PomdpSyntaxError(f"expected number, got {tok!r}", line, col) from None

    def numbers(self, count: int) -> np.ndarray:
        return np.array([self.number() for _ in range(count)])

    def at_statement(self) -> bool:
        tok = self.peek()
        return tok in _KEYWORDS and (self.peek(1) == ":" or (tok == "start" and self.peek(1) in ("include", "exclude")))


class _Parser:
    def __init__(self, text: str, strict: bool):
        self.ts = _TokenStream(text)
        self.strict = strict
        self.discount = None
        self.sign = 1.0
        self.names = {}
        self.named = {}
        self.start = None
        self.trans = {}   # (a, s) -> {s': p}
        self.obs = {}     # (a, s') -> {z: p}
        self.r_base = None
        self.r_rules = {}  # (a, s) -> [(s' or None, z or None, value)]
        self.seen = set()

    # entity declarations -------------------------------------------------
    def _declare(self, kind: str):
        ts = self.ts
        tok = ts.peek()
        if tok is not None and re.fullmatch(r"\d+", tok):
            ts.next()
            n = int(tok)
            if n < 1:
                raise ts.error(f"{kind} count must be positive")
            self.names[kind] = [str(i) for i in range(n)]
            self.named[kind] = False
            return
        names = []
        while ts.peek() is not None and not ts.at_statement():
            names.append(ts.next())
        if not names:
            raise ts.error(f"expected {kind} count or names")
        if len(set(names)) != len(names):
            raise ts.error(f"duplicate {kind} name")
        self.names[kind] = names
        self.named[kind] = True

    def _count(self, kind: str) -> int:
        if kind not in self.names:
            raise MissingBlock(f"'{kind}:' must be declared before it is used")
        return len(self.names[kind])

    def _ref(self, kind: str) -> list:
        """Resolve one entity reference ('*', name or index) to indices."""
        ts = self.ts
        line, col = ts.where()
        tok = ts.next(kind[:-1])
        n = self._count(kind)
        if tok == "*":
            return list(range(n))
        names = self.names[kind]
        if self.named.get(kind):
            try:
                return [names.index(tok)]
            except ValueError:
                pass
        if re.fullmatch(r"\d+", tok) and int(tok) < n:
            return [int(tok)]
        raise PomdpSyntaxError(f"unknown {kind[:-1]} {tok!r}", line, col)

    # statements -------------------------------------------------------------
    def parse(self):
        ts = self.ts
        while ts.peek() is not None:
            line, col = ts.where()
            tok = ts.next()
            if tok == "start" and ts.peek() in ("include", "exclude"):
                mode = ts.next()
                ts.expect(":")
                self._start_subset(mode)
                continue
            if tok not in _KEYWORDS:
                raise PomdpSyntaxError(f"unexpected token {tok!r}", line, col)
            ts.expect(":")
            self.seen.add(tok)
            getattr(self, f"_stmt_{tok}")()
        return self._build()

    def _stmt_discount(self):
        self.discount = self.ts.number()

    def _stmt_values(self):
        line, col = self.ts.where()
        tok = self.ts.next("reward or cost")
        if tok not in ("reward", "cost"):
            raise PomdpSyntaxError(f"values must be 'reward' or 'cost', got {tok!r}", line, col)
        self.sign = -1.0 if tok == "cost" else 1.0

    def _stmt_states(self):
        self._declare("states")

    def _stmt_actions(self):
        self._declare("actions")

    def _stmt_observations(self):
        self._declare("observations")

    def _stmt_start(self):
        ts = self.ts
        n = self._count("states")
        if ts.peek() == "uniform":
            ts.next()
            self.start = np.full(n, 1.0 / n)
        elif all(_is_number(ts.peek(i) or "") for i in range(n)):
            self.start = ts.numbers(n)
        else:
            (s,) = self._ref("states")
            self.start = np.zeros(n)
            self.start[s] = 1.0

    def _start_subset(self, mode: str):
        ts = self.ts
        n = self._count("states")
        chosen = set()
        while ts.peek() is not None and not ts.at_statement():
            chosen.update(self._ref("states"))
        if not chosen:
            raise ts.error("start include/exclude needs at least one state")
        members = sorted(chosen) if mode == "include" else [s for s in range(n) if s not in chosen]
        self.start = np.zeros(n)
        self.start[members] = 1.0 / len(members)

    def _matrix_or_keyword(self, rows: int, cols: int, allow_identity: bool):
        ts = self.ts
        tok = ts.peek()
        if tok == "uniform":
            ts.next()
            return np.full((rows, cols), 1.0 / cols)
        if tok == "identity":
            if not allow_identity:
                raise ts.error("'identity' is only valid for transition matrices")
            ts.next()
            return np.eye(rows)
        return ts.numbers(rows * cols).reshape(rows, cols)

    def _row_or_uniform(self, cols: int):
        ts = self.ts
        if ts.peek() == "uniform":
            ts.next()
            return np.full(cols, 1.0 / cols)
        return ts.numbers(cols)

    def _stmt_T(self):
        ts = self.ts
        S = self._count("states")
        acts = self._ref("actions")
        if ts.peek() != ":":
            mat = self._matrix_or_keyword(S, S, allow_identity=True)
            for a in acts:
                for s in range(S):
                    nz = np.flatnonzero(mat[s])
                    self.trans[a, s] = dict(zip(nz.tolist(), mat[s, nz].tolist()))
            return
        ts.next()
        starts = self._ref("states")
        if ts.peek() != ":":
            row = self._row_or_uniform(S)
            nz = np.flatnonzero(row)
            entry = dict(zip(nz.tolist(), row[nz].tolist()))
            for a in acts:
                for s in starts:
                    self.trans[a, s] = dict(entry)
            return
        ts.next()
        ends = self._ref("states")
        p = ts.number()
        for a in acts:
            for s in starts:
                row = self.trans.setdefault((a, s), {})
                for s2 in ends:
                    row[s2] = p

    def _stmt_O(self):
        ts = self.ts
        S = self._count("states")
        Z = self._count("observations")
        acts = self._ref("actions")
        if ts.peek() != ":":
            mat = self._matrix_or_keyword(S, Z, allow_identity=False)
            for a in acts:
                for s in range(S):
                    nz = np.flatnonzero(mat[s])
                    self.obs[a, s] = dict(zip(nz.tolist(), mat[s, nz].tolist()))
            return
        ts.next()
        ends = self._ref("states")
        if ts.peek() != ":":
            row = self._row_or_uniform(Z)
            nz = np.flatnonzero(row)
            entry = dict(zip(nz.tolist(), row[nz].tolist()))
            for a in acts:
                for s in ends:
                    self.obs[a, s] = dict(entry)
            return
        ts.next()
        zs = self._ref("observations")
        p = ts.number()
        for a in acts:
            for s in ends:
                row = self.obs.setdefault((a, s), {})
                for z in zs:
                    row[z] = p

    def _stmt_R(self):
        ts = self.ts
        S = self._count("states")
        A = self._count("actions")
        Z = self._count("observations")
        if self.r_base is None:
            self.r_base = np.zeros((A, S))
        acts = self._ref("actions")
        ts.expect(":")
        starts = self._ref("states")
        rules = []
        if ts.peek() != ":":
            mat = ts.numbers(S * Z).reshape(S, Z)
            rules = [(s2, z, mat[s2, z]) for s2 in range(S) for z in range(Z)]
        else:
            ts.next()
            ends_tok = ts.peek()
            ends = self._ref("states")
            if ts.peek() != ":":
                row = ts.numbers(Z)
                rules = [(s2, z, row[z]) for s2 in ends for z in range(Z)]
            else:
                ts.next()
                obs_tok = ts.peek()
                zs = self._ref("observations")
                v = ts.number()
                if ends_tok == "*" and obs_tok == "*":
                    for a in acts:
                        for s in starts:
                            self.r_base[a, s] = v
                            self.r_rules.pop((a, s), None)
                    return
                s2_key = None if ends_tok == "*" else ends[0]
                z_key = None if obs_tok == "*" else zs[0]
                rules = [(s2_key, z_key, v)]
        for a in acts:
            for s in starts:
                self.r_rules.setdefault((a, s), []).extend(rules)

    # assembly ---------------------------------------------------------------
    def _build(self) -> PomdpModel:
        for kind in ("states", "actions", "observations"):
            if kind not in self.names:
                raise MissingBlock(f"missing '{kind}:' declaration")
        if self.discount is None:
            raise MissingBlock("missing 'discount:' declaration")
        if "T" not in self.seen:
            raise MissingBlock("missing transition ('T:') entries")
        if "O" not in self.seen:
            raise MissingBlock("missing observation ('O:') entries")
        S = self._count("states")
        A = self._count("actions")
        Z = self._count("observations")
        labels = {k: tuple(v) for k, v in self.names.items()}

        def row_err(kind, a, s, total):
            from .model import StochasticityError
            return StochasticityError(kind, a, s, total, f"(s={labels['states'][s]}, a={labels['actions'][a]})")

        trans, obs = [], []
        for a in range(A):
            rows, cols, vals = [], [], []
            for s in range(S):
                row = self.trans.get((a, s))
                if row is None:
                    if self.strict:
                        raise row_err("T", a, s, 0.0)
                    row = {s: 1.0}
                total = sum(row.values())
                if abs(total - 1.0) > STOCHASTIC_TOL:
                    raise row_err("T", a, s, total)
                for s2, p in row.items():
                    if p != 0.0:
                        rows.append(s)
                        cols.append(s2)
                        vals.append(p)
            trans.append(sp.csr_matrix((vals, (rows, cols)), shape=(S, S)))
            rows, cols, vals = [], [], []
            for s in range(S):
                row = self.obs.get((a, s))
                if row is None:
                    if self.strict:
                        raise row_err("O", a, s, 0.0)
                    row = {z: 1.0 / Z for z in range(Z)}
                total = sum(row.values())
                if abs(total - 1.0) > STOCHASTIC_TOL:
                    raise row_err("O", a, s, total)
                for z, p in row.items():
                    if p != 0.0:
                        rows.append(s)
                        cols.append(z)
                        vals.append(p)
            obs.append(sp.csr_matrix((vals, (rows, cols)), shape=(S, Z)))

        base = self.r_base if self.r_base is not None else np.zeros((A, S))
        reward = base.T.copy()
        for (a, s), rules in self.r_rules.items():
            t_row = trans[a].getrow(s)
            total = 0.0
            for s2, pt in zip(t_row.indices, t_row.data):
                o_row = obs[a].getrow(s2)
                for z, po in zip(o_row.indices, o_row.data):
                    value = base[a, s]
                    for rs2, rz, rv in reversed(rules):
                        if (rs2 is None or rs2 == s2) and (rz is None or rz == z):
                            value = rv
                            break
                    total += pt * po * value
            reward[s, a] = total
        reward *= self.sign

        if self.start is None:
            start = np.full(S, 1.0 / S)
        else:
            start = self.start
            if abs(start.sum() - 1.0) > STOCHASTIC_TOL:
                raise ModelError(f"start distribution sums to {start.sum():.12g}")
        return PomdpModel(
            S, A, Z, tuple(trans), tuple(obs), reward, self.discount, Belief.from_dense(start),
            state_labels=labels["states"], action_labels=labels["actions"],
            observation_labels=labels["observations"],
        )


def parse_pomdp(text: str, *, strict: bool = True) -> PomdpModel:
    """Parse a Cassandra-format POMDP description.

    With ``strict=False`` unspecified transition rows default to identity and
    unspecified observation rows to uniform.
    """
    return _Parser(text, strict).parse()


def load_pomdp(path, *, strict: bool = True) -> PomdpModel:
    path = Path(path)
    model = parse_pomdp(path.read_text(), strict=strict)
    object.__setattr__(model, "name", path.stem)
    return model


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def serialize_pomdp(model: PomdpModel) -> str:
    """Cassandra text for a model, probabilities written with 12 significant digits."""
    def names(labels, n, prefix):
        if labels:
            return [re.sub(r"[\s:#]", "_", str(x)) for x in labels]
        return [f"{prefix}{i}" for i in range(n)]

    S = names(model.state_labels, model.num_states, "s")
    A = names(model.action_labels, model.num_actions, "a")
    Z = names(model.observation_labels, model.num_observations, "o")
    out = [
        f"discount: {_fmt(model.discount)}",
        "values: reward",
        "states: " + " ".join(S),
        "actions: " + " ".join(A),
        "observations: " + " ".join(Z),
    ]
    b0 = model.initial_belief
    if b0.index.size == model.num_states and np.allclose(b0.prob, 1.0 / model.num_states, rtol=0, atol=1e-15):
        out.append("start: uniform")
    elif b0.index.size * 4 < model.num_states and np.allclose(b0.prob, 1.0 / b0.index.size, rtol=0, atol=1e-15):
        out.append("start include: " + " ".join(S[i] for i in b0.index))
    else:
        out.append("start: " + " ".join(_fmt(x) for x in b0.to_dense(model.num_states)))
    out.append("")
    for a in range(model.num_actions):
        t = model.transition[a].tocoo()
        out.extend(f"T: {A[a]} : {S[i]} : {S[j]} {_fmt(p)}" for i, j, p in zip(t.row, t.col, t.data))
    for a in range(model.num_actions):
        o = model.observation[a].tocoo()
        out.extend(f"O: {A[a]} : {S[i]} : {Z[z]} {_fmt(p)}" for i, z, p in zip(o.row, o.col, o.data))
    for s, a in zip(*np.nonzero(model.reward)):
        out.append(f"R: {A[a]} : {S[s]} : * : * {_fmt(model.reward[s, a])}")
    return "\n".join(out) + "\n"


def write_pomdp(model: PomdpModel, path) -> Path:
    path = Path(path)
    path.write_text(serialize_pomdp(model))
    return path


# --------------------------------------------------------------------------
# generators

#: Rock layouts (x, y) used when positions are not given explicitly.
ROCKSAMPLE_LAYOUTS = {
    (4, 4): [(3, 1), (2, 1), (1, 3), (0, 0)],
    (7, 8): [(2, 0), (0, 1), (3, 1), (6, 3), (2, 4), (3, 4), (5, 5), (1, 6)],
}


def random_rock_positions(n: int, k: int, seed: int = 0, start=None) -> list:
    """k distinct grid cells drawn with a seeded generator, avoiding the start cell."""
    start = (0, n // 2) if start is None else tuple(start)
    cells = [(x, y) for x in range(n) for y in range(n) if (x, y) != start]
    if k > len(cells):
        raise InvalidParams(f"cannot place {k} rocks on a {n}x{n} grid")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(cells), size=k, replace=False)
    return [cells[i] for i in sorted(chosen)]


def generate_rocksample(n: int, k: int, rock_positions=None, *, start=None, discount: float = 0.95,
                        half_efficiency_distance: float = 20.0, good_reward: float = 10.0,
                        bad_penalty: float = -10.0, exit_reward: float = 10.0,
                        empty_sample_penalty: float = -10.0, rock_seed: int = 0) -> PomdpModel:
    """RockSample[n, k].

    States are (rover cell, rock good/bad bits) plus one absorbing terminal
    state entered by moving east off the grid. Actions are north, south,
    east, west, sample and one check per rock. Checking rock i reports its
    true value with probability 0.5 + 0.5 * 2**(-d / half_efficiency_distance).
    """
    if n < 1 or k < 0:
        raise InvalidParams(f"need n >= 1 and k >= 0, got n={n}, k={k}")
    start = (0, n // 2) if start is None else tuple(start)
    if rock_positions is None:
        rock_positions = ROCKSAMPLE_LAYOUTS.get((n, k)) or random_rock_positions(n, k, rock_seed, start)
    rocks = [tuple(int(c) for c in p) for p in rock_positions]
    if len(rocks) != k:
        raise InvalidParams(f"expected {k} rock positions, got {len(rocks)}")
    if len(set(rocks)) != k:
        raise InvalidParams("rock positions must be distinct")
    for x, y in rocks + [start]:
        if not (0 <= x < n and 0 <= y < n):
            raise InvalidParams(f"cell {(x, y)} lies outside the {n}x{n} grid")
    if half_efficiency_distance <= 0:
        raise InvalidParams("half_efficiency_distance must be positive")

    n_cfg = 1 << k
    S = n * n * n_cfg + 1
    terminal = S - 1
    A = 5 + k
    states = np.arange(S - 1)
    pos = states // n_cfg
    bits = states % n_cfg
    px, py = pos // n, pos % n
    rock_at = -np.ones(n * n, dtype=np.int64)
    for i, (x, y) in enumerate(rocks):
        rock_at[x * n + y] = i

    def idx(x, y, b):
        return (x * n + y) * n_cfg + b

    nxt = np.empty((A, S), dtype=np.int64)
    reward = np.zeros((S, A))
    nxt[:, terminal] = terminal
    nxt[0, :-1] = idx(px, np.minimum(py + 1, n - 1), bits)       # north
    nxt[1, :-1] = idx(px, np.maximum(py - 1, 0), bits)           # south
    at_edge = px == n - 1
    nxt[2, :-1] = np.where(at_edge, terminal, idx(np.minimum(px + 1, n - 1), py, bits))  # east
    reward[:-1, 2] = np.where(at_edge, exit_reward, 0.0)
    nxt[3, :-1] = idx(np.maximum(px - 1, 0), py, bits)           # west
    here = rock_at[pos]
    has_rock = here >= 0
    good = has_rock & (((bits >> np.where(has_rock, here, 0)) & 1) == 1)
    cleared = np.where(good, bits & ~(1 << np.where(has_rock, here, 0)), bits)
    nxt[4, :-1] = idx(px, py, cleared)
    reward[:-1, 4] = np.where(has_rock, np.where(good, good_reward, bad_penalty), empty_sample_penalty)
    for i in range(k):
        nxt[5 + i] = np.arange(S)

    ones = np.ones(S)
    trans = tuple(sp.csr_matrix((ones, (np.arange(S), nxt[a])), shape=(S, S)) for a in range(A))
    # observation 0 = "good", 1 = "bad"; non-sensing actions always report "bad"
    null_obs = sp.csr_matrix((ones, (np.arange(S), np.ones(S, dtype=np.int64))), shape=(S, 2))
    obs = [null_obs] * 5
    for i, (rx, ry) in enumerate(rocks):
        dist = np.hypot(px - rx, py - ry)
        acc = 0.5 + 0.5 * np.power(2.0, -dist / half_efficiency_distance)
        is_good = ((bits >> i) & 1) == 1
        p_good = np.append(np.where(is_good, acc, 1.0 - acc), 0.0)
        dense = np.column_stack([p_good, 1.0 - p_good])
        obs.append(sp.csr_matrix(dense))

    start_states = idx(start[0], start[1], np.arange(n_cfg))
    b0 = Belief(np.sort(start_states), np.full(n_cfg, 1.0 / n_cfg), validate=False)
    state_labels = tuple(f"x{x}y{y}r{b:0{max(k, 1)}b}" for x, y, b in zip(px, py, bits)) + ("terminal",)
    action_labels = ("north", "south", "east", "west", "sample") + tuple(f"check{i}" for i in range(k))
    model = PomdpModel(
        S, A, 2, trans, tuple(obs), reward, discount, b0,
        state_labels=state_labels, action_labels=action_labels,
        observation_labels=("good", "bad"), name=f"rocksample-{n}-{k}",
        metadata={"rocks": rocks, "start": start, "grid": n},
    )
    if model.num_states != n * n * (1 << k) + 1:
        raise AssertionError("state count mismatch")
    return model


TAG_CELLS = tuple([(x, y) for y in range(2) for x in range(10)] + [(x, y) for y in range(2, 5) for x in range(5, 8)])


def generate_tag(*, discount: float = 0.95, stay_probability: float = 0.2, tag_reward: float = 10.0,
                 tag_penalty: float = -10.0, move_cost: float = -1.0) -> PomdpModel:
    """The Tag pursuit problem on its 29-cell map.

    States pair robot and opponent cells (29 x 29) plus 29 absorbing "tagged"
    states, one per robot cell. The robot observes its own cell, or a
    dedicated observation when it shares a cell with the opponent. The
    opponent moves away from the robot along each axis with probability
    (1 - stay_probability) / 2 per axis (split evenly when aligned on that
    axis); moves into walls leave it in place.
    """
    cells = TAG_CELLS
    nc = len(cells)
    where = {c: i for i, c in enumerate(cells)}
    moves = [(0, 1), (0, -1), (1, 0), (-1, 0)]  # north, south, east, west

    def step(c, d):
        target = (cells[c][0] + d[0], cells[c][1] + d[1])
        return where.get(target, c)

    away = (1.0 - stay_probability) / 2.0

    def opponent_dist(r, o):
        dist = {o: stay_probability}
        rx, ry = cells[r]
        ox, oy = cells[o]
        if ox > rx:
            xs = [((1, 0), away)]
        elif ox < rx:
            xs = [((-1, 0), away)]
        else:
            xs = [((1, 0), away / 2), ((-1, 0), away / 2)]
        if oy > ry:
            ys = [((0, 1), away)]
        elif oy < ry:
            ys = [((0, -1), away)]
        else:
            ys = [((0, 1), away / 2), ((0, -1), away / 2)]
        for d, p in xs + ys:
            o2 = step(o, d)
            dist[o2] = dist.get(o2, 0.0) + p
        return dist

    S = nc * nc + nc
    found = nc
    rows = [[] for _ in range(5)]
    cols = [[] for _ in range(5)]
    vals = [[] for _ in range(5)]
    reward = np.zeros((S, 5))
    for r in range(nc):
        for o in range(nc):
            s = r * nc + o
            opp = opponent_dist(r, o)
            for a in range(4):
                r2 = step(r, moves[a])
                for o2, p in opp.items():
                    rows[a].append(s)
                    cols[a].append(r2 * nc + o2)
                    vals[a].append(p)
                reward[s, a] = move_cost
            if r == o:
                rows[4].append(s)
                cols[4].append(nc * nc + r)
                vals[4].append(1.0)
                reward[s, 4] = tag_reward
            else:
                for o2, p in opp.items():
                    rows[4].append(s)
                    cols[4].append(r * nc + o2)
                    vals[4].append(p)
                reward[s, 4] = tag_penalty
    for r in range(nc):
        s = nc * nc + r
        for a in range(5):
            rows[a].append(s)
            cols[a].append(s)
            vals[a].append(1.0)
    trans = tuple(sp.csr_matrix((vals[a], (rows[a], cols[a])), shape=(S, S)) for a in range(5))
    z_of = np.empty(S, dtype=np.int64)
    for r in range(nc):
        for o in range(nc):
            z_of[r * nc + o] = found if r == o else r
        z_of[nc * nc + r] = r
    obs_mat = sp.csr_matrix((np.ones(S), (np.arange(S), z_of)), shape=(S, nc + 1))
    b0 = Belief.uniform(S, np.arange(nc * nc))
    state_labels = tuple(f"r{r}o{o}" for r in range(nc) for o in range(nc)) + tuple(f"r{r}tagged" for r in range(nc))
    return PomdpModel(
        S, 5, nc + 1, trans, (obs_mat,) * 5, reward, discount, b0,
        state_labels=state_labels, action_labels=("north", "south", "east", "west", "tag"),
        observation_labels=tuple(f"cell{c}" for c in range(nc)) + ("found",), name="tag",
    )


# --------------------------------------------------------------------------
# benchmark registry


def corpus_dir() -> Path:
    """Directory searched for benchmark ``.pomdp`` files (HSVI_CORPUS_DIR or ./corpus)."""
    return Path(os.environ.get("HSVI_CORPUS_DIR", "corpus"))


def _find_corpus_file(stems: Iterable[str]) -> Path:
    searched = []
    for base in (corpus_dir(), Path(__file__).parent / "data"):
        for stem in stems:
            for suffix in (".pomdp", ".POMDP"):
                p = base / f"{stem}{suffix}"
                searched.append(str(p))
                if p.is_file():
                    return p
    raise FileNotFoundError("benchmark file not found; searched: " + ", ".join(searched))


@dataclass(frozen=True)
class BenchmarkSpec:
    """Registry entry: how to obtain a problem plus its published reference rows."""

    name: str
    sizes: tuple
    hsvi2_reward: float | None
    qmdp_reward: float | None
    reward_ci: float
    loader: Callable[[], PomdpModel] = field(repr=False, compare=False, default=None)
    #: episodes end on the first strictly positive reward (goal-terminated mazes)
    end_on_positive_reward: bool = False
    source: str = ""


def _corpus_loader(*stems):
    def load():
        path = _find_corpus_file(stems)
        return load_pomdp(path)
    return load


def _tag_loader():
    try:
        return load_pomdp(_find_corpus_file(["tag"]))
    except FileNotFoundError:
        return generate_tag()


BENCHMARKS = {
    spec.name: spec for spec in [
        BenchmarkSpec("tiger", (2, 3, 2), None, None, 0.0, _corpus_loader("tiger"), source="bundled file"),
        BenchmarkSpec("tiger-grid", (36, 5, 17), 2.30, 0.26, 0.14, _corpus_loader("tiger-grid", "4x3.95", "tiger_grid"),
                      source="corpus file"),
        BenchmarkSpec("hallway", (61, 5, 21), 0.52, 0.14, 0.038, _corpus_loader("hallway"),
                      end_on_positive_reward=True, source="corpus file"),
        BenchmarkSpec("hallway2", (93, 5, 17), 0.35, 0.052, 0.048, _corpus_loader("hallway2"),
                      end_on_positive_reward=True, source="corpus file"),
        BenchmarkSpec("tag", (870, 5, 30), -6.36, -16.48, 1.2, _tag_loader, source="generator (corpus file preferred)"),
        BenchmarkSpec("rocksample-4-4", (257, 9, 2), 18.0, 3.5, 1.2, lambda: generate_rocksample(4, 4),
                      source="generator"),
        BenchmarkSpec("rocksample-7-8", (12545, 13, 2), 20.6, 0.0, 1.2, lambda: generate_rocksample(7, 8),
                      source="generator"),
        BenchmarkSpec("rocksample-10-10", (102401, 15, 2), 20.4, 0.0, 1.3, lambda: generate_rocksample(10, 10),
                      source="generator"),
    ]
}


def load_benchmark(name: str) -> PomdpModel:
    try:
        spec = BENCHMARKS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
    model = spec.loader()
    object.__setattr__(model, "name", name)
    return model
