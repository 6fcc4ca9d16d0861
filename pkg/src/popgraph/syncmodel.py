"""Synchronous k-token shuffling model and its reference executor.

In every round each node emits ``k`` tokens from its state, all ``nk`` tokens
are permuted by a uniformly random schedule ``sigma``, and node ``v`` updates
its state from the tokens found at slots ``sigma(v*k), ..., sigma(v*k+k-1)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Sequence

import numpy as np

from .engine import Task
from .rng import spawn_streams


class SyncTokenProtocol:
    """Base class for protocols in the synchronous token shuffling model.

    Subclasses list the (finite) local states and token alphabet and supply
    ``f`` (state, received tokens) -> state and ``g`` state -> k tokens.
    """

    name = "sync"
    k = 1

    @property
    def states(self) -> list[Hashable]:
        raise NotImplementedError

    @property
    def tokens(self) -> list[Hashable]:
        raise NotImplementedError

    def f(self, x, ys: tuple):
        raise NotImplementedError

    def g(self, x) -> tuple:
        raise NotImplementedError

    def input_state(self, z):
        return z

    def output(self, x):
        return x

    def round_budget(self) -> int:
        """Rounds after which the protocol is expected to have stabilized."""
        raise NotImplementedError

    def task(self) -> Task | None:
        return None

    def describe(self) -> dict[str, Any]:
        return {"k": self.k}


@dataclass
class CompiledProtocol:
    """Integer lookup tables for a :class:`SyncTokenProtocol`.

    ``f_table[x, code]`` uses ``code = sum(y_i * |Y|**i)`` over received token
    indices; ``g_table[x]`` holds the ``k`` emitted token indices.
    """

    protocol: SyncTokenProtocol
    state_list: list
    state_index: dict
    token_index: dict
    f_table: np.ndarray
    g_table: np.ndarray
    out_values: list
    out_table: np.ndarray

    @property
    def k(self) -> int:
        return self.protocol.k

    @property
    def num_states(self) -> int:
        return len(self.state_index)

    @property
    def num_tokens(self) -> int:
        return len(self.token_index)

    def encode_inputs(self, inputs: Sequence) -> np.ndarray:
        return np.array([self.state_index[self.protocol.input_state(z)] for z in inputs], dtype=np.int64)

    def token_code(self, token_ids: np.ndarray) -> np.ndarray:
        """Row-wise table code of an ``(n, k)`` array of token indices."""
        weights = self.num_tokens ** np.arange(self.k, dtype=np.int64)
        return token_ids @ weights

    def decode_outputs(self, x: np.ndarray) -> list:
        return [self.out_values[i] for i in self.out_table[x].tolist()]


def compile_tables(p: SyncTokenProtocol) -> CompiledProtocol:
    states = list(p.states)
    tokens = list(p.tokens)
    s_idx = {s: i for i, s in enumerate(states)}
    t_idx = {y: i for i, y in enumerate(tokens)}
    if len(s_idx) != len(states) or len(t_idx) != len(tokens):
        raise ValueError("state and token lists must not contain duplicates")
    k = p.k
    ny = len(tokens)
    codes = ny**k
    f_table = np.empty((len(states), codes), dtype=np.int64)
    g_table = np.empty((len(states), k), dtype=np.int64)
    combos = []
    for code in range(codes):
        digits, c = [], code
        for _ in range(k):
            c, d = divmod(c, ny)
            digits.append(tokens[d])
        combos.append(tuple(digits))
    for i, x in enumerate(states):
        emitted = p.g(x)
        if len(emitted) != k:
            raise ValueError(f"g emitted {len(emitted)} tokens, expected {k}")
        g_table[i] = [t_idx[y] for y in emitted]
        for code, ys in enumerate(combos):
            f_table[i, code] = s_idx[p.f(x, ys)]
    out_values: list = []
    out_pos: dict = {}
    out_table = np.empty(len(states), dtype=np.int64)
    for i, x in enumerate(states):
        o = p.output(x)
        if o not in out_pos:
            out_pos[o] = len(out_values)
            out_values.append(o)
        out_table[i] = out_pos[o]
    return CompiledProtocol(p, states, s_idx, t_idx, f_table, g_table, out_values, out_table)


def receive(emitted: Sequence, sigma: Sequence[int], n: int, k: int) -> list[tuple]:
    """Tokens each node receives: node v reads slots ``sigma[v*k + i]``."""
    return [tuple(emitted[sigma[v * k + i]] for i in range(k)) for v in range(n)]


def sync_round(states: Sequence, p: SyncTokenProtocol, sigma: Sequence[int]) -> list:
    """One synchronous round in pure Python (reference implementation)."""
    n, k = len(states), p.k
    if sorted(sigma) != list(range(n * k)):
        raise ValueError("schedule must be a permutation of [nk]")
    emitted = [y for x in states for y in p.g(x)]
    return [p.f(x, ys) for x, ys in zip(states, receive(emitted, sigma, n, k))]


@dataclass
class SyncRun:
    outputs: list[list]
    stabilization_round: int | None
    feasible: bool | None
    final_states: list
    rounds: int

    def jsonl(self) -> str:
        return "".join(json.dumps({"r": r, "outputs": out}) + "\n" for r, out in enumerate(self.outputs))


def stabilization_round(outputs: Sequence[Sequence], feasible: Callable[[Sequence], bool] | None = None) -> int | None:
    """First round from which outputs are constant to the end (and feasible)."""
    final = list(outputs[-1])
    if feasible is not None and not feasible(final):
        return None
    r = len(outputs) - 1
    while r > 0 and list(outputs[r - 1]) == final:
        r -= 1
    return r


def run_sync(n: int, p: SyncTokenProtocol | CompiledProtocol, inputs: Sequence, rounds: int, seed: int,
             task: Task | None = None, on_round: Callable[[int, np.ndarray, np.ndarray], None] | None = None) -> SyncRun:
    """Run ``rounds`` rounds with uniform schedules drawn from ``seed``.

    ``outputs[r]`` is the output vector after ``r`` rounds (``r = 0`` is the
    input configuration).  ``on_round(r, states, received)`` is called after
    every round with the new state indices and the received token indices.
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    cp = p if isinstance(p, CompiledProtocol) else compile_tables(p)
    if len(inputs) != n:
        raise ValueError(f"expected {n} inputs")
    k = cp.k
    rng = spawn_streams(seed, 1)[0]
    x = cp.encode_inputs(inputs)
    outputs = [cp.decode_outputs(x)]
    for r in range(1, rounds + 1):
        emitted = cp.g_table[x].reshape(-1)
        sigma = rng.permutation(n * k)
        received = emitted[sigma].reshape(n, k)
        x = cp.f_table[x, cp.token_code(received)]
        outputs.append(cp.decode_outputs(x))
        if on_round is not None:
            on_round(r, x, received)
    task = task if task is not None else cp.protocol.task()
    check = (lambda out: task.feasible(out, list(inputs))) if task is not None else None
    states = [cp.state_list[i] for i in x.tolist()]
    return SyncRun(outputs=outputs, stabilization_round=stabilization_round(outputs, check),
                   feasible=check(outputs[-1]) if check else None, final_states=states, rounds=rounds)
