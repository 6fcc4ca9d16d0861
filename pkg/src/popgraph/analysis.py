"""Exact Markov-chain oracles for token walks under the uniform edge scheduler.

A token sitting on node ``u`` moves across edge ``{u, w}`` whenever that edge
is drawn (probability ``1/m`` per step), so its walk has transition matrix
``P(u, w) = 1/m`` on edges and ``1 - d(u)/m`` on the diagonal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .graph import Graph, diameter

HITTING_MAX_N = 200
MEETING_MAX_N = 40
STATIONARY_TOL = 1e-12
RETURN_TOL = 1e-9


class SolverSizeError(ValueError):
    pass


def walk_matrix(g: Graph) -> np.ndarray:
    P = g.adjacency_matrix() / g.m
    P[np.diag_indices(g.n)] = 1.0 - np.array(g.degrees) / g.m
    return P


def stationary_check(g: Graph) -> float:
    """``max |u P - u|`` for the uniform vector ``u``."""
    u = np.full(g.n, 1.0 / g.n)
    return float(np.abs(u @ walk_matrix(g) - u).max())


@dataclass
class HittingTimes:
    H: np.ndarray        # H[u, v] expected steps from u to first reach v (u != v)
    returns: np.ndarray  # expected return time to each node

    @property
    def max_offdiag(self) -> float:
        n = self.H.shape[0]
        mask = ~np.eye(n, dtype=bool)
        return float(self.H[mask].max()) if n > 1 else 0.0


def hitting_times(g: Graph) -> HittingTimes:
    """First-passage times by one dense LU solve per target.

    Return times are computed separately as ``1 + sum_w P(u, w) H(w, u)``.
    """
    n = g.n
    if n > HITTING_MAX_N:
        raise SolverSizeError(f"dense hitting-time solve is limited to n <= {HITTING_MAX_N}")
    P = walk_matrix(g)
    H = np.zeros((n, n))
    for v in range(n):
        keep = [u for u in range(n) if u != v]
        if not keep:
            continue
        A = np.eye(n - 1) - P[np.ix_(keep, keep)]
        H[keep, v] = linalg.lu_solve(linalg.lu_factor(A), np.ones(n - 1))
    returns = np.array([1.0 + sum(P[u, w] * H[w, u] for w in range(n) if w != u) for u in range(n)])
    return HittingTimes(H=H, returns=returns)


@dataclass
class MeetingChain:
    """Two-token chain over (unordered pair, meeting parity) states.

    Same-parity moves: one token crosses an edge to a node not holding the
    other.  Parity flips when the edge between the two tokens is drawn.
    """

    g: Graph
    pairs: list[tuple[int, int]]
    index: dict
    P: np.ndarray

    def state(self, a: int, b: int, parity: int) -> int:
        pair = (a, b) if a < b else (b, a)
        return self.index[(pair, parity)]

    def degree(self, x: int) -> int:
        row = self.P[x].copy()
        row[x] = 0.0
        return int(round(row.sum() * self.g.m))


def meeting_chain(g: Graph) -> MeetingChain:
    n, m = g.n, g.m
    if n > MEETING_MAX_N:
        raise SolverSizeError(f"meeting-time solve is limited to n <= {MEETING_MAX_N}")
    pairs = list(itertools.combinations(range(n), 2))
    states = [(p, b) for b in (0, 1) for p in pairs]
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for (pair, b), i in index.items():
        a, c = pair
        for stay, mover in ((c, a), (a, c)):
            for w in g.adjacency[mover]:
                if w != stay:
                    P[i, index[(tuple(sorted((stay, w))), b)]] += 1.0 / m
        if g.has_edge(a, c):
            P[i, index[(pair, 1 - b)]] += 1.0 / m
    P[np.diag_indices(len(states))] = 1.0 - P.sum(axis=1)
    return MeetingChain(g=g, pairs=pairs, index=index, P=P)


@dataclass
class MeetingTimes:
    M: np.ndarray  # M[a, b] expected first meeting time of tokens starting at a and b

    @property
    def max(self) -> float:
        return float(self.M.max())

    def argmax(self) -> tuple[int, int]:
        a, b = np.unravel_index(int(np.argmax(self.M)), self.M.shape)
        return int(a), int(b)


def meeting_times(g: Graph) -> MeetingTimes:
    """Expected first meeting time from every pair of start nodes.

    Solves for the expected time for the two-token chain started in parity 0
    to reach any parity-1 state.  ``M[a, a] = 0``.
    """
    mc = meeting_chain(g)
    n = g.n
    M = np.zeros((n, n))
    if n < 2:
        return MeetingTimes(M)
    zero = [mc.index[(p, 0)] for p in mc.pairs]
    A = np.eye(len(zero)) - mc.P[np.ix_(zero, zero)]
    sol = linalg.lu_solve(linalg.lu_factor(A), np.ones(len(zero)))
    for (a, b), val in zip(mc.pairs, sol):
        M[a, b] = M[b, a] = val
    return MeetingTimes(M)


# ---------------------------------------------------------------------------
# Monte-Carlo cross-checks


@dataclass
class EmpiricalComparison:
    observable: str
    start: tuple[int, int]
    exact: float
    empirical: float
    runs: int

    @property
    def relative_error(self) -> float:
        return abs(self.empirical - self.exact) / self.exact if self.exact else abs(self.empirical)


def simulate_first_passage(g: Graph, start: int, target: int, runs: int, seed: int,
                           batch: int = 100_000) -> np.ndarray:
    """Steps until a token from ``start`` first sits on ``target``."""
    eu, ev = g.edge_arrays
    rng = np.random.default_rng(seed)
    out = np.empty(runs, dtype=np.int64)
    for lo in range(0, runs, batch):
        b = min(batch, runs - lo)
        pos = np.full(b, start)
        t = np.zeros(b, dtype=np.int64)
        live = np.flatnonzero(pos != target)
        while live.size:
            e = rng.integers(0, g.m, live.size)
            p = pos[live]
            p = np.where(eu[e] == p, ev[e], np.where(ev[e] == p, eu[e], p))
            pos[live] = p
            t[live] += 1
            live = live[p != target]
        out[lo:lo + b] = t
    return out


def simulate_meeting(g: Graph, a: int, b: int, runs: int, seed: int, batch: int = 100_000) -> np.ndarray:
    """Steps until the tokens starting at ``a`` and ``b`` first meet (swap across one edge)."""
    eu, ev = g.edge_arrays
    rng = np.random.default_rng(seed)
    out = np.empty(runs, dtype=np.int64)
    for lo in range(0, runs, batch):
        size = min(batch, runs - lo)
        pa = np.full(size, a)
        pb = np.full(size, b)
        t = np.zeros(size, dtype=np.int64)
        live = np.arange(size) if a != b else np.empty(0, dtype=np.int64)
        while live.size:
            e = rng.integers(0, g.m, live.size)
            x, y = eu[e], ev[e]
            ca, cb = pa[live], pb[live]
            met = ((x == ca) & (y == cb)) | ((x == cb) & (y == ca))
            ca = np.where(x == ca, y, np.where(y == ca, x, ca))
            cb = np.where(x == cb, y, np.where(y == cb, x, cb))
            pa[live], pb[live] = ca, cb
            t[live] += 1
            live = live[~met]
        out[lo:lo + size] = t
    return out


def empirical_vs_exact(g: Graph, observable: str, runs: int, seed: int,
                       start: tuple[int, int] | None = None) -> EmpiricalComparison:
    """Compare Monte-Carlo means with the exact solve.

    ``start`` defaults to the worst-case pair (the maximum of the exact table).
    """
    if observable == "hitting":
        table = hitting_times(g).H
        if start is None:
            start = tuple(int(x) for x in np.unravel_index(int(np.argmax(table)), table.shape))
        samples = simulate_first_passage(g, start[0], start[1], runs, seed)
    elif observable == "meeting":
        mt = meeting_times(g)
        table = mt.M
        if start is None:
            start = mt.argmax()
        samples = simulate_meeting(g, start[0], start[1], runs, seed)
    else:
        raise ValueError(f"unknown observable {observable!r}")
    return EmpiricalComparison(observable=observable, start=start, exact=float(table[start]),
                               empirical=float(samples.mean()), runs=runs)


# ---------------------------------------------------------------------------
# bound audits


@dataclass
class BoundAudit:
    graph: str
    lemma: str
    lhs: float
    rhs: float
    passed: bool

    def to_dict(self) -> dict:
        return {"graph": self.graph, "lemma": self.lemma, "lhs": self.lhs, "rhs": self.rhs, "pass": self.passed}


def audit_graph(g: Graph, meeting_constant: float | None = None) -> list[BoundAudit]:
    """Exact-solver audits for one graph.

    * ``stationary``: uniform residual of the walk matrix, bound 1e-12.
    * ``return-time[u]``: return time to ``u`` against n, within 1e-9.
    * ``hitting``: worst hitting time against diam * n * m (strict).
    * ``meeting``: worst meeting time against ``C * diam * n^3 * m`` when a
      constant is supplied, otherwise the ratio is reported against C = 1.
    """
    name = g.name
    diam = diameter(g)
    n, m = g.n, g.m
    res = stationary_check(g)
    out = [BoundAudit(name, "stationary", res, STATIONARY_TOL, res <= STATIONARY_TOL)]
    ht = hitting_times(g)
    for u, ret in enumerate(ht.returns.tolist()):
        out.append(BoundAudit(name, f"return-time[{u}]", ret, float(n), abs(ret - n) <= RETURN_TOL))
    out.append(BoundAudit(name, "hitting", ht.max_offdiag, float(diam * n * m), ht.max_offdiag < diam * n * m))
    if n <= MEETING_MAX_N:
        mm = meeting_times(g).max
        c = 1.0 if meeting_constant is None else meeting_constant
        rhs = c * diam * n**3 * m
        out.append(BoundAudit(name, "meeting", mm, float(rhs), mm < rhs))
    return out


def expected_leader_time_bound(g: Graph, c: float = 2.0) -> float:
    """``8 T*`` with ``T* = ceil((c+2) log n) * ceil(2 max(H_max, M_max))`` (natural log)."""
    h = hitting_times(g).max_offdiag
    mm = meeting_times(g).max
    t_star = math.ceil((c + 2) * math.log(g.n)) * math.ceil(2 * max(h, mm))
    return 8.0 * t_star
