"""The k-stack interchange process as a Markov chain on card arrangements.

Each node ``u`` holds a stack of ``k`` cards in slots ``u*k + i`` (slot
``u*k`` is the top).  One step, with probability 1/2, moves the top card of a
uniformly random node to the bottom of its stack; with probability 1/4 swaps
the top cards across a uniformly random edge; otherwise does nothing.

The chain state is the location map ``y`` (card -> slot).  A step applies an
increment ``h`` (a permutation of slots) as ``y' = h o y``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import Graph

EXACT_MAX_N = 8


class SizeError(ValueError):
    """Instance too large for the requested exact computation."""


# ---------------------------------------------------------------------------
# permutations


@dataclass(frozen=True)
class Permutation:
    """Bijection on ``[N]``; ``p[i]`` is the image of ``i``.

    ``p * q`` is composition applied right to left: ``(p * q)[i] = p[q[i]]``.
    """

    images: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.images) != list(range(len(self.images))):
            raise ValueError(f"not a permutation: {self.images}")

    @classmethod
    def identity(cls, size: int) -> "Permutation":
        return cls(tuple(range(size)))

    @classmethod
    def transposition(cls, size: int, i: int, j: int) -> "Permutation":
        img = list(range(size))
        img[i], img[j] = img[j], img[i]
        return cls(tuple(img))

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> int:
        return self.images[i]

    def __mul__(self, other: "Permutation") -> "Permutation":
        if len(other) != len(self):
            raise ValueError("cannot compose permutations of different sizes")
        return Permutation(tuple(self.images[j] for j in other.images))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self)
        for i, j in enumerate(self.images):
            inv[j] = i
        return Permutation(tuple(inv))

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.images))

    def lehmer(self) -> tuple[int, ...]:
        """Lehmer code: entry i counts later images smaller than ``p[i]``."""
        img = self.images
        return tuple(sum(1 for b in img[i + 1:] if b < a) for i, a in enumerate(img))

    def rank(self) -> int:
        """Lexicographic rank among all permutations of the same size."""
        size = len(self)
        return sum(c * math.factorial(size - 1 - i) for i, c in enumerate(self.lehmer()))

    @classmethod
    def unrank(cls, rank: int, size: int) -> "Permutation":
        pool = list(range(size))
        img = []
        for i in range(size):
            f = math.factorial(size - 1 - i)
            idx, rank = divmod(rank, f)
            img.append(pool.pop(idx))
        return cls(tuple(img))


def rank_array(perms: np.ndarray) -> np.ndarray:
    """Lexicographic ranks of each row of an ``(M, N)`` permutation array."""
    perms = np.asarray(perms)
    size = perms.shape[1]
    ranks = np.zeros(perms.shape[0], dtype=np.int64)
    for i in range(size):
        smaller = (perms[:, i + 1:] < perms[:, i:i + 1]).sum(axis=1)
        ranks += smaller * math.factorial(size - 1 - i)
    return ranks


def all_permutations(size: int) -> np.ndarray:
    """All permutations of ``[size]`` in lexicographic order, as rows."""
    return np.array(list(itertools.permutations(range(size))), dtype=np.int64).reshape(-1, size)


# ---------------------------------------------------------------------------
# stacks and increments


def rotation(n: int, k: int, u: int) -> Permutation:
    """Slot permutation moving the top card of node ``u`` to the bottom."""
    img = list(range(n * k))
    base = u * k
    for i in range(k):
        img[base + i] = base + (i - 1) % k
    return Permutation(tuple(img))


def top_swap(n: int, k: int, u: int, v: int) -> Permutation:
    return Permutation.transposition(n * k, u * k, v * k)


@dataclass
class StackConfig:
    """Card arrangement: ``cards[slot]`` is the card in that slot."""

    n: int
    k: int
    cards: np.ndarray

    @classmethod
    def identity(cls, n: int, k: int) -> "StackConfig":
        return cls(n, k, np.arange(n * k, dtype=np.int64))

    def stack(self, u: int) -> list[int]:
        return self.cards[u * self.k:(u + 1) * self.k].tolist()

    def location(self) -> np.ndarray:
        """Location map card -> slot."""
        return np.argsort(self.cards)

    def rotate(self, u: int) -> None:
        base = u * self.k
        self.cards[base:base + self.k] = np.roll(self.cards[base:base + self.k], -1)

    def swap_tops(self, u: int, v: int) -> None:
        a, b = u * self.k, v * self.k
        self.cards[a], self.cards[b] = self.cards[b], self.cards[a]

    def is_bijection(self) -> bool:
        return np.array_equal(np.sort(self.cards), np.arange(self.n * self.k))


def increment_distribution(g: Graph, k: int) -> list[tuple[Permutation, Fraction]]:
    """Support and probabilities of one interchange step.

    Rotations get 1/(2n) each, top swaps 1/(4m) each and the identity 1/4.
    For k = 1 rotations are the identity, so their mass merges into it.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    n, m = g.n, g.m
    size = n * k
    mass: dict[Permutation, Fraction] = {Permutation.identity(size): Fraction(1, 4)}
    for u in range(n):
        h = rotation(n, k, u)
        mass[h] = mass.get(h, Fraction(0)) + Fraction(1, 2 * n)
    for u, v in g.edges:
        h = top_swap(n, k, u, v)
        mass[h] = mass.get(h, Fraction(0)) + Fraction(1, 4 * m)
    return sorted(mass.items(), key=lambda kv: kv[0].images)


def interchange_step(cfg: StackConfig, g: Graph, rng: np.random.Generator) -> StackConfig:
    """Apply one step of the process in place and return ``cfg``."""
    r = rng.random()
    if r < 0.5:
        cfg.rotate(int(rng.integers(g.n)))
    elif r < 0.75:
        u, v = g.edges[int(rng.integers(g.m))]
        cfg.swap_tops(u, v)
    return cfg


def apply_interaction(cfg: StackConfig, initiator: int, responder: int, q_init: int, q_resp: int) -> StackConfig:
    """Embedded step driven by one scheduler interaction and its two bits.

    (0,0) swaps the tops, (0,1) rotates the responder, (1,0) rotates the
    initiator and (1,1) does nothing.  On regular graphs this has the same law
    as :func:`interchange_step`.
    """
    if q_init == 0 and q_resp == 0:
        cfg.swap_tops(initiator, responder)
    elif q_init == 0:
        cfg.rotate(responder)
    elif q_resp == 0:
        cfg.rotate(initiator)
    return cfg


# ---------------------------------------------------------------------------
# exact distribution


class ExactChain:
    """Exact evolution of the distribution over S_N for N <= 8."""

    def __init__(self, g: Graph, k: int):
        size = g.n * k
        if size > EXACT_MAX_N:
            raise SizeError(f"exact evolution needs N = nk <= {EXACT_MAX_N}, got {size}")
        self.g, self.k, self.size = g, k, size
        self.states = all_permutations(size)
        self.support = increment_distribution(g, k)
        # idx[h][s] = rank of h o states[s]
        self._moves = [(float(p), rank_array(np.asarray(h.images)[self.states])) for h, p in self.support]
        self.identity_rank = 0

    @property
    def num_states(self) -> int:
        return self.states.shape[0]

    def point_mass(self) -> np.ndarray:
        p = np.zeros(self.num_states)
        p[self.identity_rank] = 1.0
        return p

    def uniform(self) -> np.ndarray:
        return np.full(self.num_states, 1.0 / self.num_states)

    def step(self, p: np.ndarray) -> np.ndarray:
        out = np.zeros_like(p)
        tmp = np.empty_like(p)
        for weight, idx in self._moves:
            tmp[idx] = p
            out += weight * tmp
        return out

    def evolve(self, p: np.ndarray, steps: int) -> np.ndarray:
        for _ in range(steps):
            p = self.step(p)
        return p

    def distribution(self, t: int) -> np.ndarray:
        return self.evolve(self.point_mass(), t)

    def transition_matrix(self) -> np.ndarray:
        """Dense transition matrix ``P[s, s']`` (for oracle checks)."""
        P = np.zeros((self.num_states, self.num_states))
        rows = np.arange(self.num_states)
        for weight, idx in self._moves:
            P[rows, idx] += weight
        return P


def exact_distribution(g: Graph, k: int, t: int) -> np.ndarray:
    """Distribution over S_N after ``t`` steps from the identity (lexicographic order)."""
    return ExactChain(g, k).distribution(t)


def _check_distribution(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {p.sum()}, not 1")
    return p


def tv_distance(p: Sequence[float], q: Sequence[float]) -> float:
    """Total variation distance: half the l1 distance."""
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def l1_to_uniform(p: np.ndarray) -> float:
    return float(np.abs(p - 1.0 / p.size).sum())


def l2_to_uniform(p: np.ndarray) -> float:
    """Normalized l2 distance ``sqrt(|S|) * ||p - uniform||_2``."""
    return float(math.sqrt(p.size) * np.linalg.norm(p - 1.0 / p.size))


def _check_eps(eps: float) -> None:
    if not 0 < eps < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {eps}")


def mixing_curve(g: Graph, k: int, t_max: int) -> list[tuple[int, float, float]]:
    """Exact ``(t, d1, d2)`` for ``t = 0..t_max``."""
    chain = ExactChain(g, k)
    p = chain.point_mass()
    rows = [(0, l1_to_uniform(p), l2_to_uniform(p))]
    for t in range(1, t_max + 1):
        p = chain.step(p)
        rows.append((t, l1_to_uniform(p), l2_to_uniform(p)))
    return rows


def exact_mixing_time(g: Graph, k: int, eps: float, t_cap: int = 10**7) -> int:
    """Smallest ``t`` with ``d1(t) <= 2 eps`` by doubling, then bisection."""
    _check_eps(eps)
    chain = ExactChain(g, k)
    p0 = chain.point_mass()
    if l1_to_uniform(p0) <= 2 * eps:
        return 0
    lo, p_lo = 0, p0
    hi = 1
    p_hi = chain.step(p0)
    while l1_to_uniform(p_hi) > 2 * eps:
        if hi >= t_cap:
            raise RuntimeError(f"no mixing within {t_cap} steps")
        lo, p_lo = hi, p_hi
        p_hi = chain.evolve(p_hi, hi)
        hi *= 2
    # invariant: d1(lo) > 2 eps >= d1(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        p_mid = chain.evolve(p_lo, mid - lo)
        if l1_to_uniform(p_mid) <= 2 * eps:
            hi = mid
        else:
            lo, p_lo = mid, p_mid
    return hi


def dump_distribution(p: np.ndarray, size: int, path: str | Path | None = None) -> str:
    """JSON ``{lehmer_code: probability}`` with codes written as digit strings."""
    out = {}
    for r, prob in enumerate(np.asarray(p).tolist()):
        code = "".join(str(c) for c in Permutation.unrank(r, size).lehmer())
        out[code] = prob
    text = json.dumps(out, sort_keys=True)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


# ---------------------------------------------------------------------------
# sampling


def sample_full_process(g: Graph, k: int, t: int, samples: int, seed: int,
                        batch: int = 200_000) -> np.ndarray:
    """Empirical distribution over S_N after ``t`` steps (N <= 8), indexed by rank.

    Runs ``samples`` independent copies of the process, vectorized.
    """
    size = g.n * k
    if size > EXACT_MAX_N:
        raise SizeError(f"full-state sampling histograms need N <= {EXACT_MAX_N}")
    rng = np.random.default_rng(seed)
    eu, ev = g.edge_arrays
    counts = np.zeros(math.factorial(size), dtype=np.int64)
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        cards = np.tile(np.arange(size, dtype=np.int64), (b, 1))
        rows = np.arange(b)
        for _ in range(t):
            r = rng.random(b)
            node = rng.integers(0, g.n, b)
            edge = rng.integers(0, g.m, b)
            if k > 1:
                rot = r < 0.5
                if rot.any():
                    base = node[rot] * k
                    sub = rows[rot]
                    top = cards[sub, base].copy()
                    for i in range(k - 1):
                        cards[sub, base + i] = cards[sub, base + i + 1]
                    cards[sub, base + k - 1] = top
            sw = (r >= 0.5) & (r < 0.75)
            if sw.any():
                sub = rows[sw]
                a = eu[edge[sw]] * k
                c = ev[edge[sw]] * k
                tmp = cards[sub, a].copy()
                cards[sub, a] = cards[sub, c]
                cards[sub, c] = tmp
        location = np.argsort(cards, axis=1)
        counts += np.bincount(rank_array(location), minlength=counts.size)
        done += b
    return counts / samples


def card_chain_matrix(g: Graph, k: int) -> np.ndarray:
    """Exact transition matrix of one card's slot (N x N)."""
    n, m = g.n, g.m
    size = n * k
    P = np.zeros((size, size))
    for u in range(n):
        for i in range(k):
            s = u * k + i
            if k > 1:
                P[s, u * k + (i - 1) % k] += 1.0 / (2 * n)
            if i == 0:
                for w in g.adjacency[u]:
                    P[s, w * k] += 1.0 / (4 * m)
    P[np.arange(size), np.arange(size)] += 1.0 - P.sum(axis=1)
    return P


class CardSampler:
    """Event-driven sampler of card 0's slot over many independent copies.

    Waiting times between moves are geometric, so the cost scales with the
    number of moves rather than the number of steps.
    """

    def __init__(self, g: Graph, k: int):
        self.g, self.k = g, k
        n, m = g.n, g.m
        size = n * k
        self.size = size
        self.rot_p = 1.0 / (2 * n) if k > 1 else 0.0
        leave = np.full(size, self.rot_p)
        degs = np.array(g.degrees, dtype=float)
        leave[np.arange(n) * k] += degs / (4 * m)
        self.leave = leave
        self.max_deg = max(g.degrees)
        nbr = np.full((n, self.max_deg), -1, dtype=np.int64)
        for u, adj in enumerate(g.adjacency):
            nbr[u, :len(adj)] = adj
        self.nbr = nbr
        self.degs = np.array(g.degrees, dtype=np.int64)

    def positions(self, checkpoints: Sequence[int], samples: int, seed: int) -> np.ndarray:
        """Slot of card 0 at each checkpoint, shape ``(len(checkpoints), samples)``."""
        checkpoints = list(checkpoints)
        if sorted(checkpoints) != checkpoints:
            raise ValueError("checkpoints must be sorted")
        rng = np.random.default_rng(seed)
        k, m = self.k, self.g.m
        pos = np.zeros(samples, dtype=np.int64)
        nxt = rng.geometric(self.leave[pos])
        out = np.empty((len(checkpoints), samples), dtype=np.int64)
        for ci, T in enumerate(checkpoints):
            active = np.flatnonzero(nxt <= T)
            while active.size:
                p = pos[active]
                node, slot = np.divmod(p, k)
                on_top = slot == 0
                # choose rotation vs edge move proportional to their rates
                u = rng.random(active.size) * self.leave[p]
                rot = u < self.rot_p
                newp = p.copy()
                if k > 1:
                    newp[rot] = node[rot] * k + (slot[rot] - 1) % k
                mv = ~rot & on_top
                if mv.any():
                    pick = (rng.random(mv.sum()) * self.degs[node[mv]]).astype(np.int64)
                    newp[mv] = self.nbr[node[mv], pick] * k
                pos[active] = newp
                nxt[active] += rng.geometric(self.leave[newp])
                active = active[nxt[active] <= T]
            out[ci] = pos
        return out


def sampled_tv_curve(g: Graph, k: int, checkpoints: Sequence[int], samples: int, seed: int) -> np.ndarray:
    """TV distance of card 0's empirical slot distribution to uniform at each checkpoint."""
    sampler = CardSampler(g, k)
    pos = sampler.positions(checkpoints, samples, seed)
    size = sampler.size
    tv = np.empty(len(checkpoints))
    for i in range(len(checkpoints)):
        hist = np.bincount(pos[i], minlength=size) / samples
        tv[i] = 0.5 * np.abs(hist - 1.0 / size).sum()
    return tv


def sampled_mixing_time(g: Graph, k: int, eps: float, samples: int = 20_000, seed: int = 0,
                        resolution: int = 64, t_cap: int = 10**10) -> int:
    """Mixing time of the single-card projection, estimated by sampling.

    Doubles ``T`` until the empirical TV drops to ``eps``, then scans
    ``resolution`` evenly spaced times in ``(T/2, T]`` with common random
    numbers.  The projection mixes no slower than the full chain, so this
    is a lower-bound proxy for the full mixing time.
    """
    _check_eps(eps)
    T = 1
    while True:
        if sampled_tv_curve(g, k, [T], samples, seed)[0] <= eps:
            break
        T *= 2
        if T > t_cap:
            raise RuntimeError(f"projection did not mix within {t_cap} steps")
    if T == 1:
        return 1
    lo = T // 2
    grid = sorted(set(np.linspace(lo, T, resolution + 1).round().astype(np.int64).tolist()) - {lo})
    tv = sampled_tv_curve(g, k, grid, samples, seed)
    for t, d in zip(grid, tv):
        if d <= eps:
            return int(t)
    return int(T)


def estimate_mixing_time(g: Graph, k: int, eps: float = 0.25, mode: str = "exact", **kw) -> int:
    """Mixing time tau(eps) in ``exact`` (full S_N, N <= 8) or ``sampled`` (card projection) mode."""
    _check_eps(eps)
    if mode == "exact":
        return exact_mixing_time(g, k, eps, **kw)
    if mode == "sampled":
        return sampled_mixing_time(g, k, eps, **kw)
    raise ValueError(f"unknown mixing mode {mode!r}")


def projected_mixing_time(g: Graph, k: int, eps: float, t_cap: int = 10**8) -> int:
    """Exact mixing time of the single-card chain (oracle for the sampler)."""
    _check_eps(eps)
    P = card_chain_matrix(g, k)
    size = P.shape[0]
    p = np.zeros(size)
    p[0] = 1.0
    t = 0
    while 0.5 * np.abs(p - 1.0 / size).sum() > eps:
        p = p @ P
        t += 1
        if t > t_cap:
            raise RuntimeError("projection did not mix")
    return t


def power_law_exponent(sizes: Iterable[float], times: Iterable[float]) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(list(sizes), dtype=float))
    y = np.log(np.asarray(list(times), dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
