"""Running synchronous token protocols on graphs with asynchronous interactions.

Every node runs the phase clock.  While its clock is below the threshold
``theta`` a node is receptive and shuffles tokens with receptive partners;
when its clock reaches ``theta`` it simulates one synchronous round on the
tokens it holds.  :func:`derive_params` picks the clock and budget constants
from the graph's degree, edge expansion and the shuffle's mixing time.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numba
import numpy as np

from .clock import clock_step, clock_step_array
from .engine import AsyncProtocol, RunSummary, Task
from .graph import Graph, GraphError, expansion_for
from .interchange import EXACT_MAX_N, exact_mixing_time, sampled_mixing_time
from .rng import InteractionStream
from .syncmodel import CompiledProtocol, SyncTokenProtocol, compile_tables

TAU_SOURCES = ("theorem1", "empirical", "explicit")
MIXING_EPS = 0.25


class ParamsError(ValueError):
    """Simulation parameters cannot be derived."""


@dataclass(frozen=True)
class SimulationParams:
    n: int
    k: int
    R: int
    lam: float
    eps: float
    tau_mix: int
    tau: int
    gamma: int
    theta: int
    phi: int
    t_star: int
    degree: int
    beta: float
    c_kappa: float = 4.0
    tau_source: str = "explicit"

    def __post_init__(self):
        if self.phi != self.gamma + self.theta:
            raise ParamsError("phi must equal gamma + theta")
        if self.phi < 2 * self.gamma:
            raise ParamsError("phi must be at least 2*gamma")
        if self.t_star != (self.R * self.phi + self.gamma) * self.n:
            raise ParamsError("t_star must equal (R*phi + gamma)*n")

    def state_count(self, num_states: int, num_tokens: int) -> int:
        return self.phi * (self.R + 1) * num_states * num_tokens**self.k

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def build(cls, *, n: int, k: int, R: int, gamma: int, tau: int, lam: float = 1.0, eps: float = 0.0,
              tau_mix: int = 0, degree: int = 0, beta: float = 0.0, c_kappa: float = 4.0,
              tau_source: str = "explicit", theta: int | None = None) -> "SimulationParams":
        """Fill in ``theta``, ``phi`` and ``t_star`` from ``gamma`` and ``tau``."""
        if theta is None:
            theta = math.ceil(Fraction(2 * tau, n) + 3 * gamma)
        phi = gamma + theta
        return cls(n=n, k=k, R=R, lam=lam, eps=eps, tau_mix=tau_mix, tau=tau, gamma=gamma, theta=theta, phi=phi,
                   t_star=(R * phi + gamma) * n, degree=degree, beta=beta, c_kappa=c_kappa, tau_source=tau_source)


def theorem1_tau_mix(n: int, d: int, beta, C1: float = 1.0) -> int:
    """``C1 * (d/beta)^2 * n * log2(n)^3`` rounded up."""
    return math.ceil(C1 * float(Fraction(d) / Fraction(beta)) ** 2 * n * math.log2(n) ** 3)


def empirical_tau_mix(g: Graph, k: int, samples: int = 20_000, seed: int = 0) -> int:
    """tau(1/4): exact on S_N when N <= 8, otherwise the sampled card projection."""
    if g.n * k <= EXACT_MAX_N:
        return exact_mixing_time(g, k, MIXING_EPS)
    return sampled_mixing_time(g, k, MIXING_EPS, samples=samples, seed=seed)


def derive_params(g: Graph, k: int, R: int, lam: float = 1.0, tau_source: str = "theorem1", *,
                  tau_mix: int | None = None, eps: float | None = None, beta=None, c_kappa: float = 4.0,
                  C1: float = 1.0, mixing_samples: int = 20_000, mixing_seed: int = 0) -> SimulationParams:
    """Derive clock, threshold and budget constants for simulating ``R`` rounds.

    ``eps`` defaults to ``n^-lam / R``, the largest value with
    ``eps * R <= n^-lam``.  ``tau = ceil(log2(1/eps)) * tau_mix``,
    ``gamma = ceil(c_kappa * (d/beta) * log2 n)``,
    ``theta = ceil(2 tau / n + 3 gamma)``, ``phi = gamma + theta`` and
    ``t_star = (R phi + gamma) n``.
    """
    n = g.n
    if n < 2:
        raise ParamsError("simulation needs at least two nodes")
    if R < 1:
        raise ParamsError("R must be at least 1")
    if tau_source not in TAU_SOURCES:
        raise ParamsError(f"unknown tau source {tau_source!r}; expected one of {TAU_SOURCES}")
    if beta is None:
        try:
            beta = expansion_for(g)
        except GraphError as exc:
            raise ParamsError(str(exc)) from None
    beta = Fraction(beta) if not isinstance(beta, float) else Fraction(beta).limit_denominator(10**9)
    if beta <= 0:
        raise ParamsError("edge expansion must be positive")
    d = max(g.degrees)
    if eps is None:
        eps = n ** (-lam) / R
    if not 0 < eps < 1:
        raise ParamsError("eps must lie in (0, 1)")
    if tau_source == "theorem1":
        tau_mix = theorem1_tau_mix(n, d, beta, C1)
    elif tau_source == "empirical":
        tau_mix = empirical_tau_mix(g, k, samples=mixing_samples, seed=mixing_seed)
    elif tau_mix is None:
        raise ParamsError("explicit tau source needs tau_mix")
    tau = math.ceil(math.log2(1 / eps)) * int(tau_mix)
    gamma = math.ceil(c_kappa * float(Fraction(d) / beta) * math.log2(n))
    return SimulationParams.build(n=n, k=k, R=R, gamma=gamma, tau=tau, lam=lam, eps=eps, tau_mix=int(tau_mix),
                                  degree=d, beta=float(beta), c_kappa=c_kappa, tau_source=tau_source)


# ---------------------------------------------------------------------------
# per-interaction rules


def rotate(stack: tuple) -> tuple:
    return stack[1:] + stack[:1]


def shuffle_interaction(tok_u: tuple, tok_v: tuple, c_u: int, c_v: int, q_u: int, q_v: int,
                        theta: int) -> tuple[tuple, tuple]:
    """Token action of one interaction; ``u`` is the initiator.

    Only acts when both clocks are below ``theta``.  Bits (0,0) swap the top
    tokens, (0,1) rotate the responder's stack, (1,0) rotate the initiator's,
    (1,1) do nothing.
    """
    if c_u >= theta or c_v >= theta:
        return tok_u, tok_v
    if q_u == 0 and q_v == 0:
        return (tok_v[0],) + tok_u[1:], (tok_u[0],) + tok_v[1:]
    if q_u == 0:
        return tok_u, rotate(tok_v)
    if q_v == 0:
        return rotate(tok_u), tok_v
    return tok_u, tok_v


class WrappedProtocol(AsyncProtocol):
    """Asynchronous protocol simulating a synchronous token protocol.

    Node state is ``(c, tokens, a, r)``: clock value, the held token indices,
    the simulated state index and the number of simulated rounds.
    """

    def __init__(self, p: SyncTokenProtocol | CompiledProtocol, params: SimulationParams):
        self.cp = p if isinstance(p, CompiledProtocol) else compile_tables(p)
        if self.cp.k != params.k:
            raise ParamsError(f"protocol uses k={self.cp.k} but params were derived for k={params.k}")
        self.params = params
        self.name = f"sim[{self.cp.protocol.name}]"
        self._f = self.cp.f_table.tolist()
        self._g = [tuple(row) for row in self.cp.g_table.tolist()]
        self._out = self.cp.out_table.tolist()
        self._weights = [self.cp.num_tokens**i for i in range(self.cp.k)]

    def input_state(self, z):
        a = self.cp.state_index[self.cp.protocol.input_state(z)]
        return (0, self._g[a], a, 0)

    def output(self, state):
        return self.cp.out_values[self._out[state[2]]]

    def _update(self, tokens: tuple, a: int, r: int) -> tuple[tuple, int, int]:
        code = sum(y * w for y, w in zip(tokens, self._weights))
        a = self._f[a][code]
        return self._g[a], a, r + 1

    def transition(self, su, qu, sv, qv):
        p = self.params
        cu, tu, au, ru = su
        cv, tv, av, rv = sv
        cu, cv, who = clock_step(cu, cv, p.phi)
        tu, tv = shuffle_interaction(tu, tv, cu, cv, qu, qv, p.theta)
        if who == 0:
            if cu == p.theta and ru < p.R:
                tu, au, ru = self._update(tu, au, ru)
        elif cv == p.theta and rv < p.R:
            tv, av, rv = self._update(tv, av, rv)
        return (cu, tu, au, ru), (cv, tv, av, rv)

    def state_count(self):
        return self.params.state_count(self.cp.num_states, self.cp.num_tokens)

    def is_stable(self, config):
        # payloads freeze once every node has simulated R rounds
        return all(s[3] == self.params.R for s in config)

    def observables(self, config):
        return {"min_round": min(s[3] for s in config), "max_round": max(s[3] for s in config)}

    def describe(self):
        return {"sync": self.cp.protocol.describe(), "params": self.params.to_dict()}


# ---------------------------------------------------------------------------
# compiled fast path

STATUS_RUNNING, STATUS_DONE, STATUS_TRIGGER, STATUS_LIMIT = 0, 1, 2, 3
TRIGGER_NONE, TRIGGER_BUDGET, TRIGGER_DISAGREE = 0, 1, 2


@numba.njit(cache=True)
def _sim_block(eu, ev, edge, orient, q_init, q_resp, start, count, t0, limit,
               c, tok, a, r, out, inc, f_table, g_table, out_table, weights,
               phi, theta, R, gamma, trigger, stop_when_done,
               resets, n_resets, crossings, n_crossings, stats):
    # stats: done_count, last_change, failure_step, min_inc, min_count, max_inc, status
    n = c.shape[0]
    k = tok.shape[1]
    for i in range(start, start + count):
        t = t0 + i - start + 1
        if t > limit:
            stats[6] = 3
            return i - start
        e = edge[i]
        u = eu[e]
        v = ev[e]
        if orient[i] != 0:
            u, v = v, u
        qu = q_init[i]
        qv = q_resp[i]
        cu = c[u]
        cv = c[v]
        # clock
        if cu == cv:
            who = 0
        else:
            diff = cu - cv if cu > cv else cv - cu
            if 2 * diff < phi:
                lead = cu if cu > cv else cv
            else:
                lead = cu if cu < cv else cv
            who = 0 if cu != lead else 1
        ncu = cu
        ncv = cv
        if who == 0:
            ncu = (cu + 1) % phi
        else:
            ncv = (cv + 1) % phi
        # the advancing node simulates a round when it reaches theta; it is
        # suspended at that point, so its tokens are untouched by the shuffle
        w = u if who == 0 else v
        nw = ncu if who == 0 else ncv
        upd = nw == theta and r[w] < R
        na = a[w]
        no = out[w]
        if upd:
            code = 0
            for j in range(k):
                code += tok[w, j] * weights[j]
            na = f_table[a[w], code]
            no = out_table[na]
        if trigger != 0:
            fire = False
            if trigger == 1:
                fire = r[w] == R and nw == 0
            else:
                ru_after = r[u] + (1 if upd and w == u else 0)
                rv_after = r[v] + (1 if upd and w == v else 0)
                ou_after = no if w == u else out[u]
                ov_after = no if w == v else out[v]
                fire = ru_after == R and rv_after == R and ou_after != ov_after
            if fire:
                stats[6] = 2
                return i - start
        # commit clock
        c[u] = ncu
        c[v] = ncv
        # shuffle
        if ncu < theta and ncv < theta:
            if qu == 0 and qv == 0:
                tmp = tok[u, 0]
                tok[u, 0] = tok[v, 0]
                tok[v, 0] = tmp
            elif qu == 0:
                top = tok[v, 0]
                for j in range(k - 1):
                    tok[v, j] = tok[v, j + 1]
                tok[v, k - 1] = top
            elif qv == 0:
                top = tok[u, 0]
                for j in range(k - 1):
                    tok[u, j] = tok[u, j + 1]
                tok[u, k - 1] = top
        # events and failure monitor
        if nw == 0:
            if n_resets[w] < resets.shape[1]:
                resets[w, n_resets[w]] = t
            n_resets[w] += 1
        if nw == theta:
            if n_crossings[w] < n_resets[w] and n_crossings[w] < crossings.shape[1]:
                crossings[w, n_crossings[w]] = t
                n_crossings[w] += 1
        old = inc[w]
        inc[w] = old + 1
        if old + 1 > stats[5]:
            stats[5] = old + 1
        if old == stats[3]:
            stats[4] -= 1
            if stats[4] == 0:
                lo = inc[0]
                cnt = 0
                for x in range(n):
                    if inc[x] < lo:
                        lo = inc[x]
                        cnt = 1
                    elif inc[x] == lo:
                        cnt += 1
                stats[3] = lo
                stats[4] = cnt
        if stats[2] < 0 and stats[5] - stats[3] >= gamma:
            stats[2] = t
        # round update
        if upd:
            a[w] = na
            for j in range(k):
                tok[w, j] = g_table[na, j]
            r[w] += 1
            if r[w] == R:
                stats[0] += 1
            if no != out[w]:
                out[w] = no
                stats[1] = t
        if stop_when_done and stats[0] == n:
            stats[6] = 1
            return i - start + 1
    return count


@dataclass
class FastState:
    """Arrays describing every node's wrapped state."""

    c: np.ndarray
    tok: np.ndarray
    a: np.ndarray
    r: np.ndarray

    def to_config(self) -> list[tuple]:
        return [(int(ci), tuple(ti), int(ai), int(ri))
                for ci, ti, ai, ri in zip(self.c.tolist(), self.tok.tolist(), self.a.tolist(), self.r.tolist())]

    @classmethod
    def from_config(cls, config: Sequence[tuple]) -> "FastState":
        return cls(c=np.array([s[0] for s in config], dtype=np.int64),
                   tok=np.array([s[1] for s in config], dtype=np.int64),
                   a=np.array([s[2] for s in config], dtype=np.int64),
                   r=np.array([s[3] for s in config], dtype=np.int64))


@dataclass
class FastRun:
    """Result of the compiled simulation loop."""

    status: str
    steps: int
    last_output_change: int
    outputs: list
    state: FastState
    failure_step: int | None
    resets: np.ndarray
    crossings: np.ndarray
    n_resets: np.ndarray
    n_crossings: np.ndarray
    params: SimulationParams

    @property
    def all_done(self) -> bool:
        return bool(np.all(self.state.r == self.params.R))


def run_fast(g: Graph, wrapped: WrappedProtocol, inputs: Sequence, seed: int, max_steps: int | None = None,
             trigger: str = "none", stop_when_done: bool = True) -> FastRun:
    """Compiled equivalent of running ``wrapped`` with the engine.

    Stops when every node has simulated ``R`` rounds (if ``stop_when_done``),
    after ``max_steps`` steps, or just before the step at which ``trigger``
    (``budget`` or ``disagreement``) would fire, so that the caller can
    resume the composed protocol from ``steps``.
    """
    p = wrapped.params
    cp = wrapped.cp
    n = g.n
    if len(inputs) != n:
        raise ValueError(f"expected {n} inputs")
    if max_steps is None:
        max_steps = 4 * p.t_star
    config = [wrapped.input_state(z) for z in inputs]
    st = FastState.from_config(config)
    out = cp.out_table[st.a].astype(np.int64)
    inc = np.zeros(n, dtype=np.int64)
    weights = (cp.num_tokens ** np.arange(cp.k)).astype(np.int64)
    resets = np.full((n, p.R + 2), -1, dtype=np.int64)
    resets[:, 0] = 0
    n_resets = np.ones(n, dtype=np.int64)
    crossings = np.full((n, p.R + 1), -1, dtype=np.int64)
    n_crossings = np.zeros(n, dtype=np.int64)
    if p.theta == 0:
        crossings[:, 0] = 0
        n_crossings[:] = 1
    stats = np.array([int(np.sum(st.r == p.R)), 0, -1, 0, n, 0, 0], dtype=np.int64)
    code = {"none": TRIGGER_NONE, "budget": TRIGGER_BUDGET, "disagreement": TRIGGER_DISAGREE}[trigger]
    eu, ev = g.edge_arrays
    stream = InteractionStream(g.m, seed)
    t = 0
    status = "running"
    if stop_when_done and stats[0] == n:
        status = "done"
    while status == "running":
        block, pos = stream.next_block()
        take = len(block.edge) - pos
        used = _sim_block(eu, ev, block.edge, block.orient, block.q_init, block.q_resp, pos, take, t, max_steps,
                          st.c, st.tok, st.a, st.r, out, inc, cp.f_table, cp.g_table, cp.out_table, weights,
                          p.phi, p.theta, p.R, p.gamma, code, stop_when_done,
                          resets, n_resets, crossings, n_crossings, stats)
        stream.consume(used)
        t += used
        status = {0: "running", 1: "done", 2: "trigger", 3: "limit"}[int(stats[6])]
    return FastRun(
        status=status,
        steps=t,
        last_output_change=int(stats[1]),
        outputs=[cp.out_values[i] for i in out.tolist()],
        state=st,
        failure_step=None if stats[2] < 0 else int(stats[2]),
        resets=resets,
        crossings=crossings,
        n_resets=n_resets,
        n_crossings=n_crossings,
        params=p,
    )


def run_wrapped(g: Graph, p: SyncTokenProtocol, params: SimulationParams, inputs: Sequence, seed: int,
                max_steps: int | None = None, task: Task | None = None) -> tuple[RunSummary, FastRun]:
    """Simulate ``p`` on ``g`` until every node has completed ``R`` rounds."""
    wrapped = WrappedProtocol(p, params)
    fr = run_fast(g, wrapped, inputs, seed, max_steps=max_steps)
    task = task if task is not None else p.task()
    done = fr.status == "done"
    summary = RunSummary(
        protocol=wrapped.name,
        graph=g.name,
        n=g.n,
        seed=int(seed),
        rule="all-rounds-complete",
        stabilized=done,
        steps_to_stabilize=fr.last_output_change if done else None,
        steps_executed=fr.steps,
        final_outputs=tuple(fr.outputs),
        feasible=task.feasible(fr.outputs, list(inputs)) if task is not None else None,
        params=wrapped.describe(),
    )
    return summary, fr


# ---------------------------------------------------------------------------
# event-time audit


@dataclass
class TimingAudit:
    rounds_checked: int
    ordering_ok: bool
    separation_ok: bool
    budget_ok: bool
    min_separation: int | None
    violations: list[str] = field(default_factory=list)


def timing_audit(fr: FastRun) -> TimingAudit:
    """Check reset/threshold event ordering against the simulation's timing claims.

    ``resets[v, j]`` is node v's j-th clock reset (``j = 0`` is step 0) and
    ``crossings[v, j]`` the first time its clock reaches theta after that.
    For each round j >= 1 with complete data: ``t_max(j) < s_max(j) <
    t_min(j+1)`` (ordering) and ``s_min(j) - t_max(j) >= tau``
    (separation); every node completes its last round within ``t_star``
    (budget).
    """
    p = fr.params
    res, cro = fr.resets, fr.crossings
    violations = []
    seps = []
    checked = 0
    ordering = separation = True
    for j in range(1, p.R + 1):
        if j + 1 >= res.shape[1] or np.any(res[:, j] < 0) or np.any(cro[:, j] < 0) or np.any(res[:, j + 1] < 0):
            break
        checked += 1
        t_max, t_min_next = res[:, j].max(), res[:, j + 1].min()
        s_min, s_max = cro[:, j].min(), cro[:, j].max()
        if not (t_max < s_max < t_min_next):
            ordering = False
            violations.append(f"round {j}: t_max={t_max}, s_max={s_max}, t_min(next)={t_min_next}")
        seps.append(int(s_min - t_max))
        if s_min - t_max < p.tau:
            separation = False
    last = cro[:, p.R - 1]
    budget = bool(np.all(last >= 0) and last.max() <= p.t_star)
    return TimingAudit(rounds_checked=checked, ordering_ok=ordering, separation_ok=separation, budget_ok=budget,
                       min_separation=min(seps) if seps else None, violations=violations)


def event_rows(fr: FastRun):
    """``(node, round, reset_step, crossing_step)`` rows for CSV export."""
    for v in range(fr.resets.shape[0]):
        for j in range(fr.crossings.shape[1]):
            t_r = int(fr.resets[v, j])
            s_r = int(fr.crossings[v, j])
            if t_r < 0 and s_r < 0:
                break
            yield v, j, t_r, s_r


# ---------------------------------------------------------------------------
# schedule uniformity probe


@dataclass
class ProbeResult:
    tv: float
    histogram: np.ndarray
    samples: int
    max_steps: int


def schedule_uniformity_probe(g: Graph, k: int, params: SimulationParams, samples: int, seed: int,
                              batch: int = 100_000, theta: int | None = None) -> ProbeResult:
    """TV distance between the first simulated schedule and uniform on S_{nk}.

    Runs clock and shuffle only, from all clocks at 0, until every node's
    clock has reached ``theta`` once; the token arrangement at that step is
    the schedule of the first simulated round.  Vectorized over samples.
    ``theta`` overrides ``params.theta``; 0 gives no shuffling budget at all.
    """
    from .interchange import rank_array

    n = g.n
    size = n * k
    if size > 5:
        raise ValueError(f"probe needs nk <= 5 to resolve the (nk)! histogram, got {size}")
    eu, ev = g.edge_arrays
    rng = np.random.default_rng(seed)
    counts = np.zeros(math.factorial(size), dtype=np.int64)
    phi = params.phi
    theta = params.theta if theta is None else int(theta)
    if not 0 <= theta < phi:
        raise ValueError(f"theta must lie in [0, {phi})")
    longest = 0
    done_total = 0
    while done_total < samples:
        b = min(batch, samples - done_total)
        clocks = np.zeros((b, n), dtype=np.int64)
        cards = np.tile(np.arange(size, dtype=np.int64), (b, 1))
        crossed = np.full((b, n), theta == 0)
        live = np.flatnonzero(~crossed.all(axis=1))
        steps = 0
        while live.size:
            steps += 1
            m = live.size
            e = rng.integers(0, g.m, m)
            o = rng.integers(0, 2, m).astype(bool)
            qi = rng.integers(0, 2, m)
            qr = rng.integers(0, 2, m)
            u = np.where(o, ev[e], eu[e])
            v = np.where(o, eu[e], ev[e])
            cu, cv = clocks[live, u], clocks[live, v]
            ncu, ncv, who = clock_step_array(cu, cv, phi)
            clocks[live, u] = ncu
            clocks[live, v] = ncv
            w = np.where(who, v, u)
            hit = np.where(who, ncv, ncu) == theta
            crossed[live[hit], w[hit]] = True
            rec = (ncu < theta) & (ncv < theta)
            swap = rec & (qi == 0) & (qr == 0)
            if swap.any():
                rows = live[swap]
                a_slot, b_slot = u[swap] * k, v[swap] * k
                tmp = cards[rows, a_slot].copy()
                cards[rows, a_slot] = cards[rows, b_slot]
                cards[rows, b_slot] = tmp
            if k > 1:
                for mask, node in ((rec & (qi == 0) & (qr == 1), v), (rec & (qi == 1) & (qr == 0), u)):
                    if mask.any():
                        rows = live[mask]
                        base = node[mask] * k
                        top = cards[rows, base].copy()
                        for j in range(k - 1):
                            cards[rows, base + j] = cards[rows, base + j + 1]
                        cards[rows, base + k - 1] = top
            live = live[~crossed[live].all(axis=1)]
        longest = max(longest, steps)
        location = np.argsort(cards, axis=1)
        counts += np.bincount(rank_array(location), minlength=counts.size)
        done_total += b
    hist = counts / samples
    tv = 0.5 * float(np.abs(hist - 1.0 / hist.size).sum())
    return ProbeResult(tv=tv, histogram=hist, samples=samples, max_steps=longest)
