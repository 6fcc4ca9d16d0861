"""Slow, always-correct asynchronous protocols used as backups."""

from __future__ import annotations

from collections import Counter

from ..engine import AsyncProtocol

INACTIVE, BLACK, WHITE = 0, 1, 2
TOKEN_NAMES = {INACTIVE: "inactive", BLACK: "black", WHITE: "white"}


class TokenLeaderElection(AsyncProtocol):
    """Six-state token leader election.

    A state is ``(leader, token)`` with ``leader`` in {0, 1} and ``token`` in
    {inactive, black, white}.  Per interaction, in order: two black tokens
    whiten the responder's; a white token at the initiator demotes a leader
    responder and is spent; then the two tokens swap.
    """

    name = "le-token6"

    def input_state(self, z):
        return (1, BLACK) if z else (0, INACTIVE)

    def output(self, state):
        return state[0]

    def transition(self, su, qu, sv, qv):
        lu, yu = su
        lv, yv = sv
        if yu == BLACK and yv == BLACK:
            yv = WHITE
        if yu == WHITE and lv == 1:
            lv = 0
            yu = INACTIVE
        return (lu, yv), (lv, yu)

    def state_count(self):
        return 6

    @staticmethod
    def counts(config) -> dict[str, int]:
        tok = Counter(s[1] for s in config)
        return {"candidates": sum(s[0] for s in config), "black": tok[BLACK], "white": tok[WHITE]}

    def is_stable(self, config):
        c = self.counts(config)
        return c["candidates"] == 1 and c["black"] == 1 and c["white"] == 0

    def observables(self, config):
        return self.counts(config)


class FourStateMajority(AsyncProtocol):
    """Four-state exact majority (binary interval consensus) on graphs.

    Strong opinions A (input 1) and B (input 0) travel as tokens and weak
    opinions a, b fill the nodes they leave.  For a node pair holding
    ``(x, y)`` the unordered rules are::

        B b -> b B    B a -> b B    B A -> b a
        b a -> a b    b A -> A a    a A -> A a

    A-B cancellation leaves each node with the weak form of its own
    opinion; every other meeting swaps the two positions, so strong
    opinions travel and convert the weak ones they pass.  ``#A - #B`` is
    invariant.
    """

    name = "em-backup4"
    STATES = ("A", "B", "a", "b")
    _RULES = {
        ("B", "b"): ("b", "B"),
        ("B", "a"): ("b", "B"),
        ("B", "A"): ("b", "a"),
        ("b", "a"): ("a", "b"),
        ("b", "A"): ("A", "a"),
        ("a", "A"): ("A", "a"),
    }

    def input_state(self, z):
        return "A" if z else "B"

    def output(self, state):
        return 1 if state in ("A", "a") else 0

    def transition(self, su, qu, sv, qv):
        out = self._RULES.get((su, sv))
        if out is not None:
            return out
        out = self._RULES.get((sv, su))
        if out is not None:
            return out[1], out[0]
        return su, sv

    def state_count(self):
        return 4

    def is_stable(self, config):
        c = Counter(config)
        return (c["B"] == 0 and c["b"] == 0 and c["A"] >= 1) or (c["A"] == 0 and c["a"] == 0 and c["B"] >= 1)

    def observables(self, config):
        c = Counter(config)
        return {s: c[s] for s in self.STATES}
