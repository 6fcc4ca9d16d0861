"""Interaction graphs: representation, generators, and expansion metrics.

Nodes are dense integers ``0..n-1``; the edge list is canonical (``u < v``,
sorted), so equal inputs always give equal graphs and equal traces.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "Graph",
    "GraphError",
    "GraphGenerationError",
    "GraphMetrics",
    "FAMILIES",
    "generate",
    "edge_expansion",
    "closed_form_expansion",
    "expansion_for",
    "diameter",
    "metrics",
    "relabel",
    "load_graph",
    "dump_graph",
]

EXACT_EXPANSION_MAX_N = 24
RANDOM_REGULAR_RETRIES = 1000


class GraphError(ValueError):
    """Invalid graph or invalid generator parameters."""


class GraphGenerationError(RuntimeError):
    """A randomized generator exhausted its retry budget."""


@dataclass(frozen=True)
class Graph:
    """Immutable connected simple graph.

    Build through :meth:`from_edges` or :func:`generate`; both canonicalize
    the edge list and reject loops, parallel edges and disconnected graphs.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    family: str = "custom"
    params: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        adjacency: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adjacency[u].append(v)
            adjacency[v].append(u)
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adjacency))
        object.__setattr__(self, "_eu", np.array([e[0] for e in self.edges], dtype=np.int64))
        object.__setattr__(self, "_ev", np.array([e[1] for e in self.edges], dtype=np.int64))

    @classmethod
    def from_edges(cls, n: int, edges, family: str = "custom", params: dict | None = None) -> "Graph":
        if n < 1:
            raise GraphError("graph needs at least one node")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            e = (u, v) if u < v else (v, u)
            if e in canon:
                raise GraphError(f"parallel edge {e}")
            canon.add(e)
        g = cls(n=n, edges=tuple(sorted(canon)), family=family, params=dict(params or {}))
        if not g.is_connected():
            raise GraphError("graph is not connected")
        return g

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> list[int]:
        return [len(a) for a in self.adjacency]

    @property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint arrays ``(eu, ev)`` aligned with :attr:`edges`."""
        return self._eu, self._ev

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adjacency[u]

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for w in self.adjacency[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == self.n

    @property
    def name(self) -> str:
        if not self.params:
            return f"{self.family}(n={self.n})"
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.family}({inner})"

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self._eu, self._ev] = 1.0
        a[self._ev, self._eu] = 1.0
        return a


# ---------------------------------------------------------------------------
# generators


def _clique(n: int) -> list[tuple[int, int]]:
    if n < 2:
        raise GraphError("clique needs n >= 2")
    return list(itertools.combinations(range(n), 2))


def _cycle(n: int) -> list[tuple[int, int]]:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    return [(i, (i + 1) % n) for i in range(n)]


def _path(n: int) -> list[tuple[int, int]]:
    if n < 2:
        raise GraphError("path needs n >= 2")
    return [(i, i + 1) for i in range(n - 1)]


def _complete_bipartite(r: int) -> list[tuple[int, int]]:
    if r < 1:
        raise GraphError("complete-bipartite needs r >= 1")
    return [(i, r + j) for i in range(r) for j in range(r)]


def _hypercube(dim: int) -> list[tuple[int, int]]:
    if dim < 1:
        raise GraphError("hypercube dimension must be >= 1")
    n = 1 << dim
    return [(u, u ^ (1 << b)) for u in range(n) for b in range(dim) if u < u ^ (1 << b)]


def _torus(side: int, dims: int) -> list[tuple[int, int]]:
    if side < 3:
        raise GraphError("torus side must be >= 3")
    if dims < 1:
        raise GraphError("torus needs dims >= 1")
    n = side**dims
    edges = []
    for u in range(n):
        coords = np.unravel_index(u, (side,) * dims)
        for axis in range(dims):
            shifted = list(coords)
            shifted[axis] = (shifted[axis] + 1) % side
            v = int(np.ravel_multi_index(shifted, (side,) * dims))
            edges.append((u, v))
    return edges


def _star(leaves: int) -> list[tuple[int, int]]:
    if leaves < 1:
        raise GraphError("star needs at least one leaf")
    return [(0, i) for i in range(1, leaves + 1)]


def _random_regular(n: int, d: int, seed: int) -> list[tuple[int, int]]:
    if d < 1 or d >= n or (n * d) % 2:
        raise GraphError("random-regular needs 1 <= d < n and n*d even")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(RANDOM_REGULAR_RETRIES):
        rng.shuffle(stubs)
        pairs = stubs.reshape(-1, 2)
        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        if np.any(lo == hi):
            continue
        keys = lo * n + hi
        if np.unique(keys).size != keys.size:
            continue
        edges = list(zip(lo.tolist(), hi.tolist()))
        if Graph(n=n, edges=tuple(sorted(edges))).is_connected():
            return edges
    raise GraphGenerationError(f"random-regular(n={n}, d={d}) failed after {RANDOM_REGULAR_RETRIES} attempts")


FAMILIES = ("clique", "cycle", "path", "complete-bipartite", "hypercube", "torus", "random-regular", "star")


def generate(family: str, seed: int = 0, **params) -> Graph:
    """Build a graph of a named family.

    Size parameters per family: ``clique/cycle/path: n``,
    ``complete-bipartite: r``, ``hypercube: dim``, ``torus: side, dims``,
    ``random-regular: n, d``, ``star: leaves``. Only random-regular reads
    ``seed``.
    """
    try:
        if family == "clique":
            n, edges = params["n"], _clique(params["n"])
        elif family == "cycle":
            n, edges = params["n"], _cycle(params["n"])
        elif family == "path":
            n, edges = params["n"], _path(params["n"])
        elif family == "complete-bipartite":
            n, edges = 2 * params["r"], _complete_bipartite(params["r"])
        elif family == "hypercube":
            n, edges = 1 << params["dim"], _hypercube(params["dim"])
        elif family == "torus":
            dims = params.get("dims", 2)
            params = {"side": params["side"], "dims": dims}
            n, edges = params["side"] ** dims, _torus(params["side"], dims)
        elif family == "random-regular":
            n, edges = params["n"], _random_regular(params["n"], params["d"], seed)
            params = {**params, "seed": seed}
        elif family == "star":
            n, edges = params["leaves"] + 1, _star(params["leaves"])
        else:
            raise GraphError(f"unknown graph family {family!r}")
    except KeyError as exc:
        raise GraphError(f"{family} is missing parameter {exc.args[0]!r}") from None
    return Graph.from_edges(n, edges, family=family, params=params)


def relabel(g: Graph, perm) -> Graph:
    """Return ``g`` with node ``u`` renamed to ``perm[u]``."""
    perm = [int(x) for x in perm]
    if sorted(perm) != list(range(g.n)):
        raise GraphError("relabeling must be a permutation of the nodes")
    return Graph.from_edges(g.n, [(perm[u], perm[v]) for u, v in g.edges], family=g.family, params=g.params)


# ---------------------------------------------------------------------------
# metrics


def _exact_expansion(g: Graph) -> Fraction:
    n = g.n
    if n > EXACT_EXPANSION_MAX_N:
        raise GraphError(f"exact expansion enumerates 2^n subsets; n={n} exceeds {EXACT_EXPANSION_MAX_N}")
    if n == 1:
        raise GraphError("edge expansion is undefined for a single node")
    eu, ev = g.edge_arrays
    half = n // 2
    best = [None] * (half + 1)  # min boundary per subset size
    chunk = 1 << min(n, 18)
    shifts = np.arange(n, dtype=np.int64)
    for start in range(1, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.int8)
        sizes = bits.sum(axis=1)
        keep = sizes <= half
        if not keep.any():
            continue
        bits, sizes = bits[keep], sizes[keep]
        boundary = (bits[:, eu] != bits[:, ev]).sum(axis=1)
        for s in np.unique(sizes):
            b = int(boundary[sizes == s].min())
            if best[s] is None or b < best[s]:
                best[s] = b
    return min(Fraction(b, s) for s, b in enumerate(best) if s > 0 and b is not None)


def _spectral_bound(g: Graph) -> float:
    a = g.adjacency_matrix()
    lap = np.diag(a.sum(axis=1)) - a
    lam = np.linalg.eigvalsh(lap)
    return float(lam[1] / 2.0)


def _sweep_cut(g: Graph) -> Fraction:
    """Best prefix cut along the Fiedler vector: a witnessed upper bound on beta."""
    a = g.adjacency_matrix()
    lap = np.diag(a.sum(axis=1)) - a
    _, vecs = np.linalg.eigh(lap)
    best = None
    for vec in (vecs[:, 1], -vecs[:, 1]):
        order = np.argsort(vec, kind="stable")
        inside = np.zeros(g.n, dtype=bool)
        boundary = 0
        for size, v in enumerate(order[: g.n // 2].tolist(), start=1):
            nbr_in = sum(1 for w in g.adjacency[v] if inside[w])
            boundary += len(g.adjacency[v]) - 2 * nbr_in
            inside[v] = True
            val = Fraction(boundary, size)
            if best is None or val < best:
                best = val
    return best


def edge_expansion(g: Graph, mode: str = "exact"):
    """Edge expansion of ``g``.

    ``exact`` enumerates every subset (n <= 24) and returns a Fraction.
    ``spectral`` returns the Cheeger lower bound lambda_2(L)/2 as a float,
    where L is the combinatorial Laplacian; it is a bound, not beta.
    ``sweep`` returns the best Fiedler-vector prefix cut, an upper bound.
    """
    if mode == "exact":
        return _exact_expansion(g)
    if mode == "spectral":
        return _spectral_bound(g)
    if mode == "sweep":
        if g.n < 2:
            raise GraphError("edge expansion is undefined for a single node")
        return _sweep_cut(g)
    raise GraphError(f"unknown expansion mode {mode!r}")


def closed_form_expansion(g: Graph) -> Fraction | None:
    """Known edge expansion for the built-in families, or None."""
    p = g.params
    if g.family == "clique":
        return Fraction(p["n"] - p["n"] // 2)
    if g.family == "cycle":
        return Fraction(2, p["n"] // 2)
    if g.family == "hypercube":
        return Fraction(1)
    if g.family == "torus":
        side, dims = p["side"], p["dims"]
        if dims == 1:
            return Fraction(2, side // 2)
        return Fraction(2 * side ** (dims - 1), (side // 2) * side ** (dims - 1))
    if g.family == "complete-bipartite":
        r = p["r"]
        # |S| = i + j nodes (i per side) has boundary r(i+j) - 2ij
        return min(
            Fraction(r * (i + j) - 2 * i * j, i + j)
            for i in range(r + 1)
            for j in range(r + 1)
            if 0 < i + j <= r
        )
    return None


def expansion_for(g: Graph) -> Fraction:
    """Exact beta when enumerable, else the family closed form.

    Raises GraphError when neither is available; callers needing a value for
    large custom graphs must supply one (or use the spectral bound).
    """
    if g.n <= EXACT_EXPANSION_MAX_N:
        return _exact_expansion(g)
    beta = closed_form_expansion(g)
    if beta is None:
        raise GraphError(f"no exact or closed-form edge expansion for {g.name}; supply beta explicitly")
    return beta


def diameter(g: Graph) -> int:
    best = 0
    for s in range(g.n):
        dist = [-1] * g.n
        dist[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in g.adjacency[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        best = max(best, max(dist))
    return best


@dataclass(frozen=True)
class GraphMetrics:
    is_regular: bool
    degree_min: int
    degree_max: int
    degree_avg: Fraction
    edge_expansion: Fraction | float
    conductance: Fraction | float | None
    diameter: int
    expansion_method: str
    # non-regular clock conditions: beta + d_min > avg and d_min + d_max <= 2 avg
    nonregular_conditions: bool

    @property
    def d_over_beta(self) -> float:
        return float(self.degree_max / self.edge_expansion)


def metrics(g: Graph, mode: str = "auto") -> GraphMetrics:
    """Degree, expansion and diameter summary.

    ``mode='auto'`` uses exact enumeration when n <= 24, then the family
    closed form, then the spectral bound.
    """
    degs = g.degrees
    dmin, dmax = min(degs), max(degs)
    avg = Fraction(2 * g.m, g.n)
    if mode == "auto":
        if g.n <= EXACT_EXPANSION_MAX_N:
            beta, method = _exact_expansion(g), "exact-enumeration"
        elif closed_form_expansion(g) is not None:
            beta, method = closed_form_expansion(g), "closed-form"
        else:
            beta, method = _spectral_bound(g), "spectral-bound"
    elif mode == "exact":
        beta, method = _exact_expansion(g), "exact-enumeration"
    elif mode == "spectral":
        beta, method = _spectral_bound(g), "spectral-bound"
    else:
        raise GraphError(f"unknown metrics mode {mode!r}")
    regular = dmin == dmax
    return GraphMetrics(
        is_regular=regular,
        degree_min=dmin,
        degree_max=dmax,
        degree_avg=avg,
        edge_expansion=beta,
        conductance=beta / dmin if regular else None,
        diameter=diameter(g),
        expansion_method=method,
        nonregular_conditions=bool(beta + dmin > avg and dmin + dmax <= 2 * avg),
    )


# ---------------------------------------------------------------------------
# serialization


def dump_graph(g: Graph, path: str | Path | None = None) -> str:
    text = json.dumps({"family": g.family, "params": g.params, "n": g.n, "edges": [list(e) for e in g.edges]})
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def load_graph(path: str | Path) -> Graph:
    """Read a graph from JSON (``{family, params, n, edges}``) or a ``u v`` edge list."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        data = json.loads(text)
        return Graph.from_edges(data["n"], data["edges"], family=data.get("family", "custom"),
                                params=data.get("params") or {})
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'u v'")
        edges.append((int(parts[0]), int(parts[1])))
    if not edges:
        raise GraphError(f"{path}: no edges")
    n = max(max(e) for e in edges) + 1
    return Graph.from_edges(n, edges, family="custom", params={"source": Path(path).name})
