"""Asynchronous execution core: scheduler, protocol interface and run loop."""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .graph import Graph
from .rng import InteractionStream

SCHEMA_VERSION = 1
DEFAULT_MAX_STEPS = 10**9

SUMMARY_COLUMNS = (
    "schema_version",
    "protocol",
    "graph",
    "n",
    "seed",
    "steps",
    "parallel_time",
    "stabilized",
    "rule",
    "feasible",
    "leader_count",
    "majority_output",
)


class AsyncProtocol:
    """Base class for protocols run by the asynchronous engine.

    Subclasses implement :meth:`transition` as a pure function of the two
    states and two bits, plus the input and output maps.  States must be
    hashable and immutable (ints or tuples).
    """

    name = "async"

    def input_state(self, z):
        return z

    def output(self, state):
        return state

    def transition(self, su, qu: int, sv, qv: int):
        raise NotImplementedError

    def state_count(self) -> int | None:
        return None

    def is_stable(self, config: Sequence) -> bool | None:
        """Exact stable-configuration test, or None when none is known."""
        return None

    def observables(self, config: Sequence) -> dict[str, Any]:
        return {}

    def describe(self) -> dict[str, Any]:
        return {}


class IdentityProtocol(AsyncProtocol):
    name = "identity"

    def transition(self, su, qu, sv, qv):
        return su, sv

    def is_stable(self, config):
        return True


# ---------------------------------------------------------------------------
# tasks


@dataclass(frozen=True)
class Task:
    """Output-feasibility predicate for a task, given the input vector."""

    name: str
    check: Callable[[Sequence, Sequence], bool] = field(compare=False)

    def feasible(self, outputs: Sequence, inputs: Sequence) -> bool:
        return bool(self.check(outputs, inputs))


def input_majority(inputs: Sequence) -> int | None:
    """Majority bit of 0/1 inputs, or None on a tie."""
    ones = sum(1 for z in inputs if z)
    zeros = len(inputs) - ones
    if ones == zeros:
        return None
    return int(ones > zeros)


def _leader_check(outputs, inputs):
    return sum(1 for o in outputs if o == 1) == 1


def _majority_check(outputs, inputs):
    maj = input_majority(inputs)
    return maj is not None and all(o == maj for o in outputs)


def _max_check(outputs, inputs):
    top = max(inputs)
    return all(o == top for o in outputs)


LEADER_ELECTION = Task("leader-election", _leader_check)
MAJORITY = Task("majority", _majority_check)
BROADCAST = Task("broadcast", _max_check)
ANY_OUTPUT = Task("any", lambda outputs, inputs: True)


# ---------------------------------------------------------------------------
# stabilization rules


@dataclass(frozen=True)
class ExactPredicate:
    """Stop at the first checked step where the protocol reports a stable configuration."""

    check_every: int = 1
    name: str = "exact-predicate"


@dataclass(frozen=True)
class Operational:
    """Stop once outputs are feasible and unchanged for ``window`` steps.

    The reported stabilization step is the last output change.  The default
    window is ``32 n log2 n`` steps.
    """

    window: int | None = None
    name: str = "operational"

    def resolve_window(self, n: int) -> int:
        if self.window is not None:
            return int(self.window)
        return max(1, math.ceil(32 * n * math.log2(n))) if n > 1 else 1


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class Interaction:
    t: int
    initiator: int
    responder: int
    q_init: int
    q_resp: int


@dataclass(frozen=True)
class TraceRecord:
    t: int
    outputs_digest: str
    observables: dict[str, Any]

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "outputs_digest": self.outputs_digest, "observables": self.observables},
                          sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def outputs_digest(outputs: Sequence) -> str:
    return hashlib.blake2b(repr(tuple(outputs)).encode(), digest_size=8).hexdigest()


@dataclass
class RunSummary:
    protocol: str
    graph: str
    n: int
    seed: int
    rule: str
    stabilized: bool
    steps_to_stabilize: int | None
    steps_executed: int
    final_outputs: tuple
    feasible: bool | None = None
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def parallel_time(self) -> float | None:
        if self.steps_to_stabilize is None:
            return None
        return self.steps_to_stabilize / self.n

    @property
    def leader_count(self) -> int:
        return sum(1 for o in self.final_outputs if o == 1)

    @property
    def majority_output(self):
        values = set(self.final_outputs)
        return next(iter(values)) if len(values) == 1 else None

    def row(self) -> dict[str, Any]:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, bool):
                return "true" if x else "false"
            if isinstance(x, float):
                return repr(x)
            return x

        return {
            "schema_version": SCHEMA_VERSION,
            "protocol": self.protocol,
            "graph": self.graph,
            "n": self.n,
            "seed": self.seed,
            "steps": fmt(self.steps_to_stabilize),
            "parallel_time": fmt(self.parallel_time),
            "stabilized": fmt(self.stabilized),
            "rule": self.rule,
            "feasible": fmt(self.feasible),
            "leader_count": self.leader_count,
            "majority_output": fmt(self.majority_output),
        }

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["final_outputs"] = list(self.final_outputs)
        d["parallel_time"] = self.parallel_time
        return d


# ---------------------------------------------------------------------------
# scheduler


def orient(g: Graph, edge_index: int, orient_bit: int) -> tuple[int, int]:
    """Ordered (initiator, responder) for a drawn edge and orientation bit."""
    u, v = g.edges[edge_index]
    return (u, v) if orient_bit == 0 else (v, u)


def sample_interaction(g: Graph, stream: InteractionStream, t: int = 0) -> Interaction:
    """Draw the next interaction from ``stream``: uniform edge, fair orientation, two fair bits."""
    e, o, qi, qr = stream.draw()
    u, v = orient(g, e, o)
    return Interaction(t=t, initiator=u, responder=v, q_init=qi, q_resp=qr)


# ---------------------------------------------------------------------------
# run loop


def run(
    g: Graph,
    protocol: AsyncProtocol,
    inputs: Sequence | None,
    seed: int,
    max_steps: int = DEFAULT_MAX_STEPS,
    rule: ExactPredicate | Operational | None = None,
    task: Task | None = None,
    trace_every: int = 0,
    *,
    initial_config: Sequence | None = None,
    start_step: int = 0,
    step_hook: Callable[[int, list, int, int], None] | None = None,
    debug: bool = False,
) -> tuple[RunSummary, list[TraceRecord]]:
    """Run ``protocol`` on ``g`` under the uniform stochastic scheduler.

    Step ``t`` (1-based) applies one interaction; ``t = 0`` is the initial
    configuration.  ``initial_config`` and ``start_step`` resume a run that
    was advanced elsewhere with the same seed.  ``step_hook(t, config, u, v)``
    is called after every step.  Returns the summary and the trace records
    (every ``trace_every`` steps, plus the last step; none when 0).
    """
    if max_steps <= 0:
        raise ValueError("max_steps must be positive")
    if rule is None:
        rule = ExactPredicate()
    if initial_config is not None:
        config = list(initial_config)
    else:
        if inputs is None or len(inputs) != g.n:
            raise ValueError(f"expected {g.n} inputs")
        config = [protocol.input_state(z) for z in inputs]
    if len(config) != g.n:
        raise ValueError(f"configuration has {len(config)} states for {g.n} nodes")
    if isinstance(rule, Operational) and task is None:
        raise ValueError("the operational rule needs a task to judge feasibility")
    ref_inputs = list(inputs) if inputs is not None else None

    stream = InteractionStream(g.m, seed, start_step=start_step)
    edges = g.edges
    transition = protocol.transition
    output = protocol.output
    outputs = [output(s) for s in config]
    trace: list[TraceRecord] = []

    def record(t: int) -> None:
        trace.append(TraceRecord(t=t, outputs_digest=outputs_digest(outputs),
                                 observables=protocol.observables(config)))

    t = start_step
    stabilized_at: int | None = None
    exact = isinstance(rule, ExactPredicate)
    stride = max(1, rule.check_every) if exact else 1
    window = rule.resolve_window(g.n) if not exact else 0
    last_change = start_step
    feasible_now = task.feasible(outputs, ref_inputs) if (task is not None and not exact) else False

    if trace_every:
        record(t)
    if exact and protocol.is_stable(config):
        stabilized_at = t
    elif not exact and feasible_now and window == 0:
        stabilized_at = t

    limit = start_step + max_steps
    while stabilized_at is None and t < limit:
        t += 1
        e, o, qi, qr = stream.draw()
        u, v = edges[e]
        if o:
            u, v = v, u
        if debug:
            snapshot = list(config)
        su, sv = transition(config[u], qi, config[v], qr)
        config[u] = su
        config[v] = sv
        if debug:
            changed = [w for w in range(g.n) if config[w] != snapshot[w]]
            assert set(changed) <= {u, v}, f"step {t} changed nodes {changed}"
        ou, ov = output(su), output(sv)
        if ou != outputs[u] or ov != outputs[v]:
            outputs[u] = ou
            outputs[v] = ov
            last_change = t
            if not exact:
                feasible_now = task.feasible(outputs, ref_inputs)
        if step_hook is not None:
            step_hook(t, config, u, v)
        if trace_every and t % trace_every == 0:
            record(t)
        if exact:
            if t % stride == 0 and protocol.is_stable(config):
                stabilized_at = t
        elif feasible_now and t - last_change >= window:
            stabilized_at = last_change

    if trace_every and (not trace or trace[-1].t != t):
        record(t)
    feasible = task.feasible(outputs, ref_inputs) if (task is not None and ref_inputs is not None) else None
    summary = RunSummary(
        protocol=protocol.name,
        graph=g.name,
        n=g.n,
        seed=int(seed),
        rule=rule.name,
        stabilized=stabilized_at is not None,
        steps_to_stabilize=stabilized_at,
        steps_executed=t,
        final_outputs=tuple(outputs),
        feasible=feasible,
        params=protocol.describe(),
    )
    return summary, trace


def ordered_pair_frequencies(g: Graph, steps: int, seed: int) -> dict[tuple[int, int], float]:
    """Empirical frequency of each ordered (initiator, responder) pair."""
    stream = InteractionStream(g.m, seed)
    eu, ev = g.edge_arrays
    counts: Counter = Counter()
    done = 0
    while done < steps:
        block, pos = stream.next_block()
        take = min(len(block.edge) - pos, steps - done)
        e = block.edge[pos:pos + take]
        o = block.orient[pos:pos + take].astype(bool)
        init = np.where(o, ev[e], eu[e])
        resp = np.where(o, eu[e], ev[e])
        keys, cnt = np.unique(init * g.n + resp, return_counts=True)
        for k, c in zip(keys.tolist(), cnt.tolist()):
            counts[divmod(k, g.n)] += c
        stream.consume(take)
        done += take
    return {pair: c / steps for pair, c in sorted(counts.items())}
