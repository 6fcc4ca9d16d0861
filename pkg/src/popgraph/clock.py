"""Graphical phase clock and the two-choice load-balancing process behind it."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .graph import Graph, GraphMetrics, metrics as graph_metrics
from .rng import InteractionStream


def circular_distance(x: int, y: int, phi: int) -> int:
    d = abs(x - y)
    return min(d, phi - d)


def clock_step(c_init: int, c_resp: int, phi: int) -> tuple[int, int, int]:
    """One clock interaction; returns ``(new_init, new_resp, who)``.

    ``who`` is 0 if the initiator advanced and 1 if the responder did.
    Equal values advance the initiator; otherwise the node not holding the
    circular maximum advances (max when the values are within phi/2 of each
    other, min when the gap wraps around).
    """
    if c_init == c_resp:
        return (c_init + 1) % phi, c_resp, 0
    lead = max(c_init, c_resp) if 2 * abs(c_init - c_resp) < phi else min(c_init, c_resp)
    if c_init != lead:
        return (c_init + 1) % phi, c_resp, 0
    return c_init, (c_resp + 1) % phi, 1


def clock_step_array(c_init: np.ndarray, c_resp: np.ndarray, phi: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`clock_step`; ``who`` is a boolean array (True = responder)."""
    c_init = np.asarray(c_init)
    c_resp = np.asarray(c_resp)
    near = 2 * np.abs(c_init - c_resp) < phi
    lead = np.where(near, np.maximum(c_init, c_resp), np.minimum(c_init, c_resp))
    who = (c_init != c_resp) & (c_init == lead)
    new_init = np.where(who, c_init, (c_init + 1) % phi)
    new_resp = np.where(who, (c_resp + 1) % phi, c_resp)
    return new_init, new_resp, who


def clock_skew(config: Sequence[int], phi: int) -> int:
    """Maximum pairwise circular distance among clock values."""
    values = sorted(set(int(c) for c in config))
    if any(c < 0 or c >= phi for c in values):
        raise ValueError(f"clock values must lie in [0, {phi})")
    if len(values) < 2:
        return 0
    best = 0
    for i, x in enumerate(values):
        for y in values[i + 1:]:
            best = max(best, circular_distance(x, y, phi))
    return best


@dataclass(frozen=True)
class ClockParams:
    phi: int
    gamma: int
    kappa: float = 1.0
    c_kappa: float = 4.0

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be positive")
        if self.phi < 2 * self.gamma:
            raise ValueError(f"phase length {self.phi} is below 2*gamma = {2 * self.gamma}")

    @staticmethod
    def required_gamma(m: GraphMetrics, n: int, c_kappa: float = 4.0) -> int:
        return math.ceil(c_kappa * float(m.degree_max / m.edge_expansion) * math.log2(n)) if n > 1 else 1

    @classmethod
    def for_graph(cls, g: Graph, c_kappa: float = 4.0, kappa: float = 1.0,
                  m: GraphMetrics | None = None) -> "ClockParams":
        m = m if m is not None else graph_metrics(g)
        gamma = cls.required_gamma(m, g.n, c_kappa)
        return cls(phi=2 * gamma, gamma=gamma, kappa=kappa, c_kappa=c_kappa)

    def check(self, g: Graph, m: GraphMetrics | None = None) -> list[str]:
        """Problems with these parameters on ``g`` (empty when all conditions hold)."""
        m = m if m is not None else graph_metrics(g)
        issues = []
        need = self.required_gamma(m, g.n, self.c_kappa)
        if self.gamma < need:
            issues.append(f"gamma={self.gamma} is below c_kappa*(d/beta)*log2(n) = {need}")
        if not m.is_regular:
            if m.nonregular_conditions:
                issues.append("non-regular graph: clock guarantees are experimental")
            else:
                issues.append("non-regular graph violates beta + d_min > avg degree or "
                              "d_min + d_max <= 2*avg degree; clock guarantees do not apply")
        return issues


@dataclass
class GapTrajectory:
    """Two-choice gap trajectory with coupling diagnostics."""

    t: np.ndarray
    gap: np.ndarray
    steps: int
    max_gap: int
    total_balls: int
    increment_violations: int
    coupling_violations: int
    coupled_steps: int
    first_gap_at_gamma: int | None
    gamma: int
    phi: int
    warnings: list[str] = field(default_factory=list)

    def rows(self):
        return zip(self.t.tolist(), self.gap.tolist())


@numba.njit(cache=True)
def _gap_block(eu, ev, edge, orient, start, count, t0, loads, clock, phi, gamma, stats, rec_t, rec_gap, rec_len,
               record_every):
    # stats: min_load, min_count, max_load, inc_violations, coupling_violations, coupled_steps, first_fail,
    # running max gap
    n = loads.shape[0]
    for i in range(start, start + count):
        t = t0 + i - start + 1
        e = edge[i]
        u = eu[e]
        v = ev[e]
        if orient[i] != 0:
            u, v = v, u
        gap_before = stats[2] - stats[0]
        # unbounded two-choice process, ties go to the initiator
        ball = v if loads[v] < loads[u] else u
        # bounded clock on the same interaction
        cu = clock[u]
        cv = clock[v]
        if cu == cv:
            inc = u
        else:
            diff = cu - cv if cu > cv else cv - cu
            if 2 * diff < phi:
                lead = cu if cu > cv else cv
            else:
                lead = cu if cu < cv else cv
            inc = u if cu != lead else v
        clock[inc] = (clock[inc] + 1) % phi
        changed = (1 if clock[u] != cu else 0) + (1 if clock[v] != cv else 0)
        if changed != 1:
            stats[3] += 1
        if gap_before < gamma:
            stats[5] += 1
            if inc != ball:
                stats[4] += 1
        elif stats[6] < 0:
            stats[6] = t - 1
        old = loads[ball]
        loads[ball] = old + 1
        if old + 1 > stats[2]:
            stats[2] = old + 1
        if old == stats[0]:
            stats[1] -= 1
            if stats[1] == 0:
                lo = loads[0]
                cnt = 0
                for w in range(n):
                    if loads[w] < lo:
                        lo = loads[w]
                        cnt = 1
                    elif loads[w] == lo:
                        cnt += 1
                stats[0] = lo
                stats[1] = cnt
        if stats[2] - stats[0] > stats[7]:
            stats[7] = stats[2] - stats[0]
        if stats[2] - stats[0] >= gamma and stats[6] < 0:
            stats[6] = t
        if t % record_every == 0:
            rec_t[rec_len[0]] = t
            rec_gap[rec_len[0]] = stats[2] - stats[0]
            rec_len[0] += 1


def measure_gap_process(g: Graph, steps: int, seed: int, gamma: int | None = None, phi: int | None = None,
                        record_every: int = 1, c_kappa: float = 4.0) -> GapTrajectory:
    """Run the two-choice process coupled with the bounded clock.

    Both processes consume the same interaction stream as the engine.  The
    returned trajectory samples the gap (max load minus min load) every
    ``record_every`` steps, starting with ``(0, 0)``.  The diagnostics count
    steps where not exactly one clock advanced and steps, taken while the gap
    was below ``gamma``, where the clock advanced a different node than the
    one receiving the ball.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    m = graph_metrics(g, mode="auto" if g.n <= 24 else "spectral") if gamma is None else None
    if gamma is None:
        gamma = ClockParams.required_gamma(m, g.n, c_kappa)
    phi = 2 * gamma if phi is None else phi
    params = ClockParams(phi=phi, gamma=gamma, c_kappa=c_kappa)
    notes = []
    if not all(d == g.degrees[0] for d in g.degrees):
        notes = params.check(g)
        for note in notes:
            warnings.warn(note, stacklevel=2)

    loads = np.zeros(g.n, dtype=np.int64)
    clock = np.zeros(g.n, dtype=np.int64)
    stats = np.array([0, g.n, 0, 0, 0, 0, -1, 0], dtype=np.int64)
    cap = steps // record_every + 1
    rec_t = np.zeros(cap, dtype=np.int64)
    rec_gap = np.zeros(cap, dtype=np.int64)
    rec_len = np.array([1], dtype=np.int64)
    eu, ev = g.edge_arrays
    stream = InteractionStream(g.m, seed)
    done = 0
    while done < steps:
        block, pos = stream.next_block()
        take = min(len(block.edge) - pos, steps - done)
        _gap_block(eu, ev, block.edge, block.orient, pos, take, done, loads, clock, phi, gamma, stats,
                   rec_t, rec_gap, rec_len, record_every)
        stream.consume(take)
        done += take
    k = int(rec_len[0])
    return GapTrajectory(
        t=rec_t[:k],
        gap=rec_gap[:k],
        steps=steps,
        max_gap=int(stats[7]),
        total_balls=int(loads.sum()),
        increment_violations=int(stats[3]),
        coupling_violations=int(stats[4]),
        coupled_steps=int(stats[5]),
        first_gap_at_gamma=None if stats[6] < 0 else int(stats[6]),
        gamma=gamma,
        phi=phi,
        warnings=notes,
    )
