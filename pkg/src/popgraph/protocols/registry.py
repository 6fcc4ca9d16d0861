"""Protocol catalogue by string id, and one-call runners for each kind."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

from ..engine import (DEFAULT_MAX_STEPS, LEADER_ELECTION, MAJORITY, ExactPredicate, RunSummary,
                      run as engine_run)
from ..graph import Graph
from ..simulation import SimulationParams, WrappedProtocol, derive_params, run_fast, run_wrapped
from ..syncmodel import SyncTokenProtocol, run_sync
from .backup import FourStateMajority, TokenLeaderElection
from .compose import BudgetTrigger, ComposedProtocol, DisagreementTrigger, force_backup
from .sync import Broadcast, ExactMajoritySync, LeaderElectionSync

SYNC_IDS = ("broadcast", "le-sync", "em-sync")
ASYNC_IDS = ("le-token6", "em-backup4")
COMPOSED_IDS = ("le-fast+backup", "em-fast+backup")
PROTOCOL_IDS = SYNC_IDS + ASYNC_IDS + COMPOSED_IDS


class UnknownProtocol(KeyError):
    pass


def check_id(pid: str) -> None:
    if pid not in PROTOCOL_IDS:
        raise UnknownProtocol(f"unknown protocol {pid!r}; known: {', '.join(PROTOCOL_IDS)}")


def make_sync(pid: str, n: int, **opts) -> SyncTokenProtocol:
    """Synchronous protocol for ``n`` nodes; composed ids map to their fast part."""
    lam = float(opts.get("lam", 1.0))
    if pid == "broadcast":
        return Broadcast(n, alphabet=int(opts.get("alphabet", n)), k=int(opts.get("k", 1)),
                         rounds_factor=int(opts.get("rounds_factor", 4)))
    if pid in ("le-sync", "le-fast+backup"):
        return LeaderElectionSync(n, lam=lam, broadcast_factor=int(opts.get("broadcast_factor", 4)),
                                  iterations=opts.get("iterations"))
    if pid in ("em-sync", "em-fast+backup"):
        return ExactMajoritySync(n, lam=lam, iterations=opts.get("iterations"))
    check_id(pid)
    raise UnknownProtocol(f"{pid!r} is not a synchronous protocol")


def default_inputs(pid: str, n: int, ones: int | None = None) -> list[int]:
    """Inputs used when a config gives none.

    Leader election: every node is a candidate.  Majority: the first
    ``ones`` nodes (default ``n//2 + 1``) hold 1.  Broadcast: node v holds v.
    """
    check_id(pid)
    if pid.startswith("le"):
        return [1] * n
    if pid.startswith("em"):
        ones = n // 2 + 1 if ones is None else int(ones)
        if not 0 <= ones <= n:
            raise ValueError(f"ones must lie in [0, {n}]")
        return [1] * ones + [0] * (n - ones)
    return list(range(n))


@dataclass
class ComposedRun:
    summary: RunSummary
    handoff_step: int | None
    fast_status: str | None
    clock_failure_step: int | None
    extra: dict[str, Any] = field(default_factory=dict)


def build_composed(pid: str, sync: SyncTokenProtocol, params: SimulationParams) -> ComposedProtocol:
    fast = WrappedProtocol(sync, params)
    if pid == "le-fast+backup":
        return ComposedProtocol(fast, TokenLeaderElection(), BudgetTrigger(params.phi, params.R),
                                seed_input=lambda inner, z: fast.output(inner), name=pid)
    if pid == "em-fast+backup":
        # the backup must see the original inputs to stay correct
        return ComposedProtocol(fast, FourStateMajority(), DisagreementTrigger(params.R),
                                seed_input=lambda inner, z: z, name=pid)
    raise UnknownProtocol(f"{pid!r} is not a composed protocol")


def run_composed(g: Graph, pid: str, sync: SyncTokenProtocol, params: SimulationParams, inputs: Sequence,
                 seed: int, force_nodes: Sequence[int] = (), max_steps: int = DEFAULT_MAX_STEPS) -> ComposedRun:
    """Run fast-plus-backup to an exact stable configuration.

    Without forced nodes the compiled loop advances the fast protocol until
    the trigger is about to fire (or, for majority, until every node is
    done); the composed protocol then continues in the engine from that step
    with the same stream.  ``force_nodes`` start in backup mode at step 0.
    """
    proto = build_composed(pid, sync, params)
    task = LEADER_ELECTION if pid.startswith("le") else MAJORITY
    inputs = list(inputs)
    handoff, status, failure = None, None, None
    if force_nodes:
        config = force_backup(proto, [proto.input_state(z) for z in inputs], force_nodes)
        start = 0
    else:
        trig = "budget" if pid.startswith("le") else "disagreement"
        fr = run_fast(g, proto.fast, inputs, seed, max_steps=max_steps, trigger=trig,
                      stop_when_done=not pid.startswith("le"))
        status, failure = fr.status, fr.failure_step
        config = [(0, s, z) for s, z in zip(fr.state.to_config(), inputs)]
        start = fr.steps
        handoff = fr.steps
        if fr.status == "limit":
            summary = RunSummary(protocol=pid, graph=g.name, n=g.n, seed=int(seed), rule="exact-predicate",
                                 stabilized=False, steps_to_stabilize=None, steps_executed=fr.steps,
                                 final_outputs=tuple(fr.outputs), feasible=task.feasible(fr.outputs, inputs),
                                 params=proto.describe())
            return ComposedRun(summary, handoff, status, failure)
    summary, _ = engine_run(g, proto, inputs, seed, max_steps=max(1, max_steps - start), rule=ExactPredicate(),
                            task=task, initial_config=config, start_step=start)
    return ComposedRun(summary, handoff, status, failure)


def run_cell(pid: str, g: Graph, seed: int, opts: dict[str, Any] | None = None,
             trace_every: int = 0) -> tuple[RunSummary, list]:
    """Run one (protocol, graph, seed) cell with options from an experiment config.

    Options: ``inputs`` (list) or ``ones``; ``max_steps``; for synchronous
    ids ``mode`` (``simulated`` on the graph, or ``sync`` for the reference
    executor with n = graph size), ``rounds``, ``lam``, ``tau_source``,
    ``tau_mix``, ``c_kappa``, ``C1``; ``force_nodes`` for composed ids.
    Trace records are produced only for the asynchronous ids.
    """
    check_id(pid)
    opts = dict(opts or {})
    n = g.n
    inputs = opts.get("inputs") or default_inputs(pid, n, opts.get("ones"))
    if len(inputs) != n:
        raise ValueError(f"{pid}: expected {n} inputs, got {len(inputs)}")
    max_steps = int(opts.get("max_steps", DEFAULT_MAX_STEPS))
    if pid in ASYNC_IDS:
        proto = TokenLeaderElection() if pid == "le-token6" else FourStateMajority()
        task = LEADER_ELECTION if pid == "le-token6" else MAJORITY
        return engine_run(g, proto, inputs, seed, max_steps=max_steps, rule=ExactPredicate(), task=task,
                          trace_every=trace_every)
    sync = make_sync(pid, n, **opts)
    R = int(opts.get("rounds") or sync.round_budget())
    if pid in SYNC_IDS and opts.get("mode", "simulated") == "sync":
        res = run_sync(n, sync, inputs, R, seed)
        stab = res.stabilization_round
        return RunSummary(protocol=pid, graph=f"sync(n={n})", n=n, seed=int(seed), rule="sync-retrospective",
                          stabilized=stab is not None, steps_to_stabilize=stab, steps_executed=R,
                          final_outputs=tuple(res.outputs[-1]), feasible=res.feasible,
                          params=sync.describe()), []
    params = derive_params(g, sync.k, R, lam=float(opts.get("lam", 1.0)),
                           tau_source=opts.get("tau_source", "theorem1"), tau_mix=opts.get("tau_mix"),
                           c_kappa=float(opts.get("c_kappa", 4.0)), C1=float(opts.get("C1", 1.0)),
                           mixing_seed=int(opts.get("mixing_seed", 0)))
    if pid in SYNC_IDS:
        summary, _ = run_wrapped(g, sync, params, inputs, seed, max_steps=opts.get("max_steps"))
        summary.protocol = pid
        return summary, []
    return run_composed(g, pid, sync, params, inputs, seed, force_nodes=opts.get("force_nodes", ()),
                        max_steps=max_steps).summary, []
