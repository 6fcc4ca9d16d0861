"""Protocols for the synchronous token shuffling model."""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import product
from typing import Iterable

from ..engine import BROADCAST, LEADER_ELECTION, MAJORITY, ANY_OUTPUT
from ..syncmodel import SyncTokenProtocol


def _log2_ceil(n: int) -> int:
    return math.ceil(math.log2(n)) if n > 1 else 0


class Broadcast(SyncTokenProtocol):
    """One-way epidemic: emit k copies of the current value, keep the max seen."""

    name = "broadcast"

    def __init__(self, n: int, alphabet: int = 2, k: int = 1, rounds_factor: int = 4):
        if alphabet < 1:
            raise ValueError("alphabet must be non-empty")
        self.n, self.alphabet, self.k, self.rounds_factor = n, alphabet, k, rounds_factor

    @property
    def states(self):
        return list(range(self.alphabet))

    @property
    def tokens(self):
        return list(range(self.alphabet))

    def f(self, x, ys):
        return max(x, *ys)

    def g(self, x):
        return (x,) * self.k

    def input_state(self, z):
        z = int(z)
        if not 0 <= z < self.alphabet:
            raise ValueError(f"input {z} outside alphabet of size {self.alphabet}")
        return z

    def round_budget(self) -> int:
        return max(1, self.rounds_factor * _log2_ceil(self.n))

    def task(self):
        return BROADCAST

    def describe(self):
        return {"k": self.k, "alphabet": self.alphabet, "rounds": self.round_budget()}


class SyntheticCoin(SyncTokenProtocol):
    """Each node emits a 0-token and a 1-token and outputs its first received token."""

    name = "coin"
    k = 2

    @property
    def states(self):
        return [0, 1]

    @property
    def tokens(self):
        return [0, 1]

    def f(self, x, ys):
        return ys[0]

    def g(self, x):
        return (0, 1)

    def input_state(self, z):
        return 0

    def round_budget(self) -> int:
        return 1

    def task(self):
        return ANY_OUTPUT


class LeaderElectionSync(SyncTokenProtocol):
    """Coin-flip elimination with a broadcast sub-phase (k = 2).

    State ``(l, b, a, phase)``: candidate flag, last coin, broadcast value and
    position in the iteration.  Phase 0 is the coin round; phases 1..B
    broadcast ``l*b``; at the end of phase B a candidate with coin 0 that saw
    a 1 steps down.
    """

    name = "le-sync"
    k = 2

    def __init__(self, n: int, lam: float = 1.0, broadcast_factor: int = 4, iterations: int | None = None):
        self.n, self.lam = n, lam
        self.B = max(1, broadcast_factor * _log2_ceil(n))
        self.L = self.B + 1
        if iterations is None:
            iterations = max(1, math.ceil((lam + 1) * math.log(n) / math.log(4 / 3))) if n > 1 else 1
        self.iterations = iterations

    @property
    def states(self):
        return [(l, b, a, ph) for l, b, a in product((0, 1), repeat=3) for ph in range(self.L)]

    @property
    def tokens(self):
        return [0, 1]

    def g(self, x):
        l, b, a, ph = x
        return (0, 1) if ph == 0 else (a, a)

    def f(self, x, ys):
        l, b, a, ph = x
        if ph == 0:
            b = ys[0]
            a = l * b
        else:
            a = max(a, *ys)
        if ph == self.B and l == 1 and b == 0 and a == 1:
            l = 0
        return (l, b, a, (ph + 1) % self.L)

    def input_state(self, z=1):
        return (1 if z else 0, 0, 0, 0)

    def output(self, x):
        return x[0]

    def round_budget(self) -> int:
        return self.iterations * self.L

    def task(self):
        return LEADER_ELECTION

    def describe(self):
        return {"k": 2, "lambda": self.lam, "broadcast_rounds": self.B, "iterations": self.iterations,
                "rounds": self.round_budget()}


EMPTY = "-"
FULL = ("0", "1")
SPLIT = ("0h", "1h")
EM_TOKENS = ["0", "1", "0h", "1h", EMPTY]
_VALUE = {"0": 0, "1": 1, "0h": 0, "1h": 1}
_WEIGHT = {"0": Fraction(-1), "1": Fraction(1), "0h": Fraction(-1, 2), "1h": Fraction(1, 2), EMPTY: Fraction(0)}


def weighted_discrepancy(tokens: Iterable[str]) -> Fraction:
    """Signed token mass: full 1 counts +1, split 1 +1/2, and 0-tokens negatively."""
    return sum((_WEIGHT[y] for y in tokens), Fraction(0))


class ExactMajoritySync(SyncTokenProtocol):
    """Cancellation-doubling majority over 2n virtual agents (k = 2).

    State ``(y0, y1, phase, z)``: the held token pair, position in the
    iteration of ``2t`` rounds and the node's input.  Rounds ``0..t-1`` of an
    iteration cancel opposite full tokens; rounds ``t..2t-1`` split a full
    token paired with an empty one; the last round promotes split tokens.
    """

    name = "em-sync"
    k = 2

    def __init__(self, n: int, lam: float = 1.0, iterations: int | None = None):
        self.n, self.lam = n, lam
        N = 2 * n
        self.t = max(1, math.ceil((lam + 1) * math.log(N) / math.log(5 / 4)))
        if iterations is None:
            lg = math.log2(N)
            extra = lg + math.log2(math.log(N)) + math.log2(lam + 1)
            iterations = math.ceil(lg) + 1 + max(0, math.ceil(extra))
        self.iterations = iterations

    @property
    def period(self) -> int:
        return 2 * self.t

    @property
    def states(self):
        return [(y0, y1, ph, z) for y0 in EM_TOKENS for y1 in EM_TOKENS for ph in range(self.period) for z in (0, 1)]

    @property
    def tokens(self):
        return list(EM_TOKENS)

    def g(self, x):
        return (x[0], x[1])

    def apply_rule(self, phase: int, y0: str, y1: str) -> tuple[str, str]:
        if phase < self.t:
            if {y0, y1} == {"0", "1"}:
                return EMPTY, EMPTY
            return y0, y1
        if y0 in FULL and y1 == EMPTY:
            y0 = y1 = y0 + "h"
        elif y1 in FULL and y0 == EMPTY:
            y0 = y1 = y1 + "h"
        if phase == self.period - 1:
            y0 = y0[0] if y0 in SPLIT else y0
            y1 = y1[0] if y1 in SPLIT else y1
        return y0, y1

    def f(self, x, ys):
        _, _, ph, z = x
        y0, y1 = self.apply_rule(ph, ys[0], ys[1])
        return (y0, y1, (ph + 1) % self.period, z)

    def input_state(self, z):
        z = 1 if z else 0
        return (str(z), str(z), 0, z)

    def output(self, x):
        vals = [_VALUE[y] for y in x[:2] if y != EMPTY]
        return max(vals) if vals else x[3]

    def round_budget(self) -> int:
        return self.iterations * self.period

    def task(self):
        return MAJORITY

    def describe(self):
        return {"k": 2, "lambda": self.lam, "t": self.t, "iterations": self.iterations, "rounds": self.round_budget()}
