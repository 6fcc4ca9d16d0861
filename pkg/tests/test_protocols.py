from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popgraph import engine as E
from popgraph import graph as G
from popgraph import simulation as M
from popgraph.protocols import registry
from popgraph.protocols.backup import BLACK, INACTIVE, WHITE, FourStateMajority, TokenLeaderElection
from popgraph.protocols.compose import (BACKUP, FAST, BudgetTrigger, ComposedProtocol, DisagreementTrigger,
                                        NeverTrigger, force_backup)
from popgraph.protocols.sync import (EMPTY, Broadcast, ExactMajoritySync, LeaderElectionSync, SyntheticCoin,
                                     weighted_discrepancy)
from popgraph.syncmodel import compile_tables, run_sync, sync_round

# ---------------------------------------------------------------------------
# synchronous protocols


def test_broadcast_examples():
    p = Broadcast(2, alphabet=8)
    assert sync_round([7, 2], p, [1, 0]) == [7, 7]
    run = run_sync(5, Broadcast(5, alphabet=4), [3] * 5, rounds=3, seed=0)
    assert run.stabilization_round == 0


def test_broadcast_monotone():
    p = Broadcast(32, alphabet=32)
    seen = []
    run_sync(32, p, list(range(32)), rounds=20, seed=4, on_round=lambda r, x, rec: seen.append(x.copy()))
    for a, b in zip(seen, seen[1:]):
        assert np.all(b >= a)


def test_broadcast_n128():
    p = Broadcast(128, alphabet=2)
    ok = sum(run_sync(128, p, [1] + [0] * 127, rounds=p.round_budget(), seed=s).feasible for s in range(100))
    assert ok >= 99


def test_coin():
    assert sync_round([0] * 3, SyntheticCoin(), list(range(6))) == [0, 0, 0]
    rounds = 100_000
    ones = np.zeros(8)
    totals = []

    def hook(r, x, received):
        ones[:] += x
        totals.append(int(x.sum()))

    run_sync(8, SyntheticCoin(), [0] * 8, rounds=rounds, seed=9, on_round=hook)
    assert np.all(np.abs(ones / rounds - 0.5) < 0.01)
    assert abs(np.mean(totals) - 4) < 0.02


def test_le_candidates_never_increase():
    p = LeaderElectionSync(32)
    cp = compile_tables(p)
    lead = np.array([s[0] for s in cp.state_list])
    for seed in range(10):
        counts = []
        run = run_sync(32, cp, [1] * 32, rounds=p.round_budget(), seed=seed,
                       on_round=lambda r, x, rec: counts.append(int(lead[x].sum())))
        assert counts[0] <= 32 and all(1 <= b <= a for a, b in zip(counts, counts[1:]))
        assert run.feasible


def test_le_iterations():
    assert LeaderElectionSync(64, lam=0, iterations=None).iterations == 15
    assert LeaderElectionSync(64, iterations=7).round_budget() == 7 * (4 * 6 + 1)


def test_em_all_ones():
    run = run_sync(6, ExactMajoritySync(6), [1] * 6, rounds=30, seed=1)
    assert all(o == [1] * 6 for o in run.outputs)
    assert run.final_states[0][:2] == ("1", "1")


def test_em_hand_path():
    p = ExactMajoritySync(2)
    last = p.period - 1
    states = [("1", "1", 0, 1), ("1", "0", 0, 1)]
    # every one of the 4! schedules pairs the single 0-token with a 1-token
    for sigma in itertools.permutations(range(4)):
        after = sync_round(states, p, list(sigma))
        assert Counter(t for s in after for t in s[:2]) == Counter({"1": 2, EMPTY: 2})
    # doubling in the last round of the iteration, with promotion folded in
    y = [p.apply_rule(last, "1", EMPTY), p.apply_rule(last, EMPTY, "1")]
    assert y == [("1", "1"), ("1", "1")]
    assert p.apply_rule(p.t, "1", EMPTY) == ("1h", "1h")


@given(st.sampled_from(["0", "1", "0h", "1h", EMPTY]), st.sampled_from(["0", "1", "0h", "1h", EMPTY]),
       st.integers(0, 10_000))
def test_em_discrepancy_rules(y0, y1, phase):
    p = ExactMajoritySync(8)
    phase %= p.period
    before = weighted_discrepancy([y0, y1])
    if phase == p.period - 1:
        # the doubling part conserves the mass; promotion then doubles split tokens
        mid = p.apply_rule(p.t, y0, y1)
        assert weighted_discrepancy(mid) == before
        out = p.apply_rule(phase, y0, y1)
        assert weighted_discrepancy(out) == sum(2 * weighted_discrepancy([a]) if a.endswith("h")
                                                else weighted_discrepancy([a]) for a in mid)
    else:
        assert weighted_discrepancy(p.apply_rule(phase, y0, y1)) == before


def test_weighted_discrepancy():
    assert weighted_discrepancy(["1", "1", "0", "0h", EMPTY]) == Fraction(1, 2)


def test_em_n64_margin_two():
    p = ExactMajoritySync(64)
    cp = compile_tables(p)
    ok = sum(run_sync(64, cp, [1] * 33 + [0] * 31, rounds=p.round_budget(), seed=s).feasible for s in range(100))
    assert ok >= 99


# ---------------------------------------------------------------------------
# asynchronous backups


def test_token6_k2_first_step():
    p = TokenLeaderElection()
    su, sv = p.transition((1, BLACK), 0, (1, BLACK), 0)
    assert su == (1, WHITE) and sv == (1, BLACK)


def test_token6_single_candidate_is_stable():
    g = G.generate("cycle", n=7)
    s, _ = E.run(g, TokenLeaderElection(), [0, 0, 1, 0, 0, 0, 0], seed=0, max_steps=100, task=E.LEADER_ELECTION)
    assert s.steps_to_stabilize == 0 and s.final_outputs[2] == 1


def test_token6_invariants_c6():
    g = G.generate("cycle", n=6)
    p = TokenLeaderElection()

    def hook(t, config, u, v):
        c = p.counts(config)
        assert c["black"] + c["white"] == c["candidates"]
        assert c["black"] >= 1 and c["candidates"] >= 1

    for seed in range(100):
        s, _ = E.run(g, p, [1, 0, 1, 0, 1, 0], seed=seed, max_steps=10**6, task=E.LEADER_ELECTION, step_hook=hook)
        assert s.stabilized and s.leader_count == 1


@settings(max_examples=200)
@given(st.tuples(st.integers(0, 1), st.sampled_from([INACTIVE, BLACK, WHITE])),
       st.tuples(st.integers(0, 1), st.sampled_from([INACTIVE, BLACK, WHITE])))
def test_token6_pairwise_invariant(su, sv):
    p = TokenLeaderElection()
    # reachable states satisfy: a candidate count matching the live tokens is preserved
    before = (su[0] + sv[0]) - sum(1 for s in (su, sv) if s[1] != INACTIVE)
    nu, nv = p.transition(su, 0, sv, 0)
    after = (nu[0] + nv[0]) - sum(1 for s in (nu, nv) if s[1] != INACTIVE)
    assert before == after
    assert nu[0] <= su[0] and nv[0] <= sv[0]
    assert sum(s[1] == BLACK for s in (nu, nv)) >= min(1, sum(s[1] == BLACK for s in (su, sv)))


FOUR = ["A", "B", "a", "b"]


def test_four_state_rules():
    p = FourStateMajority()
    assert p.transition("A", 0, "B", 1) == ("a", "b")
    assert p.transition("B", 0, "A", 1) == ("b", "a")
    assert p.transition("A", 0, "b", 0) == ("a", "A")
    assert p.transition("a", 0, "B", 0) == ("B", "b")
    assert p.transition("A", 0, "A", 0) == ("A", "A")
    assert p.transition("a", 0, "b", 0) == ("b", "a")


@pytest.mark.parametrize("x,y", list(itertools.product(FOUR, FOUR)))
def test_four_state_orientation_free_and_conserving(x, y):
    p = FourStateMajority()
    nx, ny = p.transition(x, 0, y, 0)
    ry, rx = p.transition(y, 1, x, 1)
    assert (nx, ny) == (rx, ry)
    strong = lambda s: (s == "A") - (s == "B")  # noqa: E731
    assert strong(nx) + strong(ny) == strong(x) + strong(y)


def test_four_state_k2_tie_absorbing():
    g = G.generate("clique", n=2)
    s, _ = E.run(g, FourStateMajority(), [1, 0], seed=0, max_steps=1000, task=E.MAJORITY)
    assert not s.stabilized and sorted(s.final_outputs) == [0, 1]


def test_four_state_all_a():
    s, _ = E.run(G.generate("cycle", n=5), FourStateMajority(), [1] * 5, seed=0, max_steps=10, task=E.MAJORITY)
    assert s.steps_to_stabilize == 0 and s.feasible


def test_four_state_c8():
    g = G.generate("cycle", n=8)
    p = FourStateMajority()

    def hook(t, config, u, v):
        c = Counter(config)
        assert c["A"] - c["B"] == 2

    for seed in range(100):
        inputs = [1] * 5 + [0] * 3
        np.random.default_rng(seed).shuffle(inputs)
        s, _ = E.run(g, p, inputs, seed=seed, max_steps=10**6, task=E.MAJORITY, step_hook=hook)
        assert s.stabilized and s.final_outputs == (1,) * 8


# ---------------------------------------------------------------------------
# composition


def test_never_trigger_matches_fast_only():
    g = G.generate("cycle", n=8)
    fast = TokenLeaderElection()
    comp = ComposedProtocol(fast, FourStateMajority(), NeverTrigger(), seed_input=lambda inner, z: z)
    a, ta = E.run(g, fast, [1] * 8, seed=5, max_steps=10**6, task=E.LEADER_ELECTION, trace_every=1)
    b, tb = E.run(g, comp, [1] * 8, seed=5, max_steps=10**6, task=E.LEADER_ELECTION, trace_every=1)
    assert [r.outputs_digest for r in ta] == [r.outputs_digest for r in tb]
    assert a.steps_to_stabilize == b.steps_to_stabilize and a.final_outputs == b.final_outputs


def test_forced_epidemic_k4():
    g = G.generate("clique", n=4)
    comp = ComposedProtocol(TokenLeaderElection(), TokenLeaderElection(), NeverTrigger(),
                            seed_input=lambda inner, z: z)
    worst = 0
    for seed in range(100):
        config = force_backup(comp, [comp.input_state(1) for _ in range(4)], [seed % 4])
        hit = {}

        def hook(t, cfg, u, v):
            if "t" not in hit and all(s[0] == BACKUP for s in cfg):
                hit["t"] = t

        E.run(g, comp, None, seed=seed, max_steps=10**5, task=E.ANY_OUTPUT, initial_config=config, step_hook=hook)
        assert "t" in hit
        worst = max(worst, hit["t"])
    # n log n scale: a one-way epidemic on K_4 completes in tens of steps
    assert worst < 20 * 4 * 2


def test_forced_le_c8():
    g = G.generate("cycle", n=8)
    for seed in range(100):
        s, _ = registry.run_cell("le-fast+backup", g, seed, {"force_nodes": [seed % 8], "tau_source": "empirical"})
        assert s.stabilized and s.leader_count == 1


def test_budget_trigger():
    t = BudgetTrigger(phi=10, R=3)
    assert t.fires((9, (), 0, 3), (0, (), 0, 3), (4, (), 0, 3), (5, (), 0, 3), 1, 1) == (True, False)
    assert t.fires((9, (), 0, 2), (0, (), 0, 2), (4, (), 0, 3), (5, (), 0, 3), 1, 1) == (False, False)


def test_disagreement_trigger():
    t = DisagreementTrigger(R=2)
    assert t.fires(None, (0, (), 0, 2), None, (0, (), 0, 2), 1, 0) == (True, True)
    assert t.fires(None, (0, (), 0, 2), None, (0, (), 0, 1), 1, 0) == (False, False)
    assert t.fires(None, (0, (), 0, 2), None, (0, (), 0, 2), 1, 1) == (False, False)


def test_em_backup_seeded_from_input():
    g = G.generate("cycle", n=6)
    sync = ExactMajoritySync(6)
    params = M.derive_params(g, 2, 4, tau_source="explicit", tau_mix=20)
    comp = registry.build_composed("em-fast+backup", sync, params)
    st_ = comp.input_state(1)
    assert st_[0] == FAST
    assert comp.convert(st_) == (BACKUP, "A", 1)


# ---------------------------------------------------------------------------
# registry


def test_default_inputs():
    assert registry.default_inputs("le-token6", 3) == [1, 1, 1]
    assert registry.default_inputs("em-sync", 5) == [1, 1, 1, 0, 0]
    assert registry.default_inputs("broadcast", 3) == [0, 1, 2]
    with pytest.raises(registry.UnknownProtocol):
        registry.default_inputs("nope", 3)
    with pytest.raises(ValueError):
        registry.default_inputs("em-backup4", 3, ones=4)


def test_run_cell_sync_mode():
    s, trace = registry.run_cell("broadcast", G.generate("cycle", n=16), 3, {"mode": "sync", "alphabet": 16})
    assert s.feasible and s.rule == "sync-retrospective" and trace == []


def test_run_cell_trace():
    s, trace = registry.run_cell("le-token6", G.generate("cycle", n=8), 1, trace_every=10)
    assert trace and trace[-1].t == s.steps_executed
