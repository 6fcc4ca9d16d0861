"""Seeded random streams shared by every simulator in the package.

One run consumes four independent Philox streams spawned from a single
``SeedSequence``: edge choice, orientation, initiator bit and responder bit.
Draws are produced in fixed blocks of :data:`BLOCK` so that the pure-Python
engine and the compiled kernels see the same values at the same step.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

BLOCK = 4096
SEED_ENV = "POPGRAPH_SEED"

STREAM_EDGE, STREAM_ORIENT, STREAM_BIT_INIT, STREAM_BIT_RESP = range(4)


def philox(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


def spawn_streams(seed: int, count: int = 4) -> list[np.random.Generator]:
    """``count`` independent Philox generators derived from ``seed``."""
    return [philox(s) for s in np.random.SeedSequence(int(seed)).spawn(count)]


def base_seed(default: int) -> int:
    """Base seed, overridden by the ``POPGRAPH_SEED`` environment variable."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return int(default)
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass
class InteractionBlock:
    edge: np.ndarray
    orient: np.ndarray
    q_init: np.ndarray
    q_resp: np.ndarray


class InteractionStream:
    """Block-buffered stream of scheduler draws for a graph with ``m`` edges.

    Step ``t`` (1-based) uses offset ``(t - 1) % BLOCK`` of block
    ``(t - 1) // BLOCK``.  Construct with ``start_step`` to resume a run after
    ``start_step`` completed steps.
    """

    def __init__(self, m: int, seed: int, start_step: int = 0):
        if m < 1:
            raise ValueError("scheduler needs at least one edge")
        self.m = m
        self.seed = int(seed)
        self._gens = spawn_streams(self.seed)
        self._block: InteractionBlock | None = None
        self._lists: tuple[list, list, list, list] | None = None
        self._pos = BLOCK
        skip_blocks, offset = divmod(int(start_step), BLOCK)
        for _ in range(skip_blocks):
            self._draw_block()
        if offset:
            self._set_block(self._draw_block())
            self._pos = offset

    def _draw_block(self) -> InteractionBlock:
        g_edge, g_orient, g_qi, g_qr = self._gens
        return InteractionBlock(
            edge=g_edge.integers(0, self.m, BLOCK, dtype=np.int64),
            orient=g_orient.integers(0, 2, BLOCK, dtype=np.int8),
            q_init=g_qi.integers(0, 2, BLOCK, dtype=np.int8),
            q_resp=g_qr.integers(0, 2, BLOCK, dtype=np.int8),
        )

    def _set_block(self, block: InteractionBlock) -> None:
        self._block = block
        self._lists = None
        self._pos = 0

    def next_block(self) -> tuple[InteractionBlock, int]:
        """Return the current block and the offset of the next unread draw.

        The caller consumes draws from the offset onwards and then calls
        :meth:`consume` with how many it used.
        """
        if self._pos >= BLOCK:
            self._set_block(self._draw_block())
        return self._block, self._pos

    def consume(self, count: int) -> None:
        self._pos += count

    def draw(self) -> tuple[int, int, int, int]:
        """Next ``(edge_index, orient, q_init, q_resp)`` as Python ints."""
        if self._pos >= BLOCK:
            self._set_block(self._draw_block())
        pos = self._pos
        self._pos += 1
        if self._lists is None:
            b = self._block
            self._lists = (b.edge.tolist(), b.orient.tolist(), b.q_init.tolist(), b.q_resp.tolist())
        e, o, qi, qr = self._lists
        return e[pos], o[pos], qi[pos], qr[pos]
