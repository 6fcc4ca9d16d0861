"""Experiment files: a YAML document describing graphs, protocols, seeds and outputs.

Every field is resolved and validated by :func:`load_spec` before any run
starts.  See ``docs/schemas.md`` for the full schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import graph as G
from .protocols.registry import PROTOCOL_IDS, SYNC_IDS, COMPOSED_IDS
from .rng import base_seed

KNOWN_KEYS = {"name", "graph", "graphs", "protocol", "protocols", "seeds", "budgets", "observables", "output"}
GRAPH_PARAM_KEYS = {"n", "r", "dim", "side", "dims", "d", "leaves", "seed"}
OBSERVABLES = {"summary", "trace"}


class SpecError(ValueError):
    """Raised for any invalid experiment file."""


@dataclass(frozen=True)
class GraphSpec:
    family: str | None
    params: dict
    file: str | None = None

    def build(self) -> G.Graph:
        if self.file is not None:
            return G.load_graph(self.file)
        params = dict(self.params)
        seed = int(params.pop("seed", 0))
        return G.generate(self.family, seed=seed, **params)


@dataclass(frozen=True)
class ProtocolSpec:
    id: str
    params: dict


@dataclass
class ExperimentSpec:
    name: str
    graphs: list[GraphSpec]
    protocols: list[ProtocolSpec]
    seeds: list[int]
    budgets: dict
    observables: list[str]
    output: dict
    base_dir: Path = field(default_factory=Path.cwd)

    def path(self, key: str) -> Path | None:
        p = self.output.get(key)
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def trace_every(self) -> int:
        return int(self.budgets.get("trace_every", 0)) if "trace" in self.observables else 0

    def cells(self):
        """All ``(cell_index, protocol, graph_spec, seed)`` in output order."""
        i = 0
        for p in self.protocols:
            for gs in self.graphs:
                for s in self.seeds:
                    yield i, p, gs, s
                    i += 1


def _graph_spec(block: Any, base_dir: Path) -> GraphSpec:
    if not isinstance(block, dict):
        raise SpecError(f"graph block must be a mapping, got {block!r}")
    if "file" in block:
        extra = set(block) - {"file"}
        if extra:
            raise SpecError(f"graph file block has unexpected keys {sorted(extra)}")
        path = Path(block["file"])
        return GraphSpec(family=None, params={}, file=str(path if path.is_absolute() else base_dir / path))
    family = block.get("family")
    if family not in G.FAMILIES:
        raise SpecError(f"unknown graph family {family!r}; known: {', '.join(G.FAMILIES)}")
    params = {k: v for k, v in block.items() if k != "family"}
    bad = set(params) - GRAPH_PARAM_KEYS
    if bad:
        raise SpecError(f"unknown graph parameters {sorted(bad)}")
    return GraphSpec(family=family, params=params)


def _protocol_spec(block: Any) -> ProtocolSpec:
    if isinstance(block, str):
        block = {"id": block}
    if not isinstance(block, dict) or "id" not in block:
        raise SpecError(f"protocol block needs an id, got {block!r}")
    pid = block["id"]
    if pid not in PROTOCOL_IDS:
        raise SpecError(f"unknown protocol {pid!r}; known: {', '.join(PROTOCOL_IDS)}")
    params = dict(block.get("params") or {})
    if "mode" in params and params["mode"] not in ("sync", "simulated"):
        raise SpecError(f"mode must be 'sync' or 'simulated', got {params['mode']!r}")
    if params.get("mode") == "sync" and pid not in SYNC_IDS:
        raise SpecError(f"{pid}: mode 'sync' only applies to synchronous protocols")
    if "force_nodes" in params and pid not in COMPOSED_IDS:
        raise SpecError(f"{pid}: force_nodes only applies to composed protocols")
    return ProtocolSpec(id=pid, params=params)


def parse_seeds(block: Any) -> list[int]:
    if isinstance(block, list):
        seeds = [int(s) for s in block]
    elif isinstance(block, dict):
        if set(block) - {"base", "count"}:
            raise SpecError("seeds mapping takes only 'base' and 'count'")
        count = int(block.get("count", 0))
        base = base_seed(int(block.get("base", 0)))
        seeds = list(range(base, base + count))
    elif isinstance(block, int) and not isinstance(block, bool):
        seeds = [block]
    else:
        raise SpecError(f"seeds must be a list or {{base, count}}, got {block!r}")
    if not seeds:
        raise SpecError("an experiment needs at least one seed")
    if any(s < 0 for s in seeds):
        raise SpecError("seeds must be non-negative")
    return seeds


def parse_spec(doc: Any, base_dir: Path | None = None) -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise SpecError("experiment file must be a YAML mapping")
    unknown = set(doc) - KNOWN_KEYS
    if unknown:
        raise SpecError(f"unknown top-level keys {sorted(unknown)}")
    if ("graph" in doc) == ("graphs" in doc):
        raise SpecError("give exactly one of 'graph' or 'graphs'")
    if ("protocol" in doc) == ("protocols" in doc):
        raise SpecError("give exactly one of 'protocol' or 'protocols'")
    base_dir = base_dir or Path.cwd()
    graphs = [_graph_spec(b, base_dir) for b in (doc["graphs"] if "graphs" in doc else [doc["graph"]])]
    protocols = [_protocol_spec(b) for b in (doc["protocols"] if "protocols" in doc else [doc["protocol"]])]
    if not graphs or not protocols:
        raise SpecError("graph and protocol lists must be non-empty")
    if "seeds" not in doc:
        raise SpecError("missing 'seeds'")
    seeds = parse_seeds(doc["seeds"])
    budgets = dict(doc.get("budgets") or {})
    for key in ("max_steps", "rounds", "trace_every"):
        if key in budgets and (not isinstance(budgets[key], int) or budgets[key] < 0):
            raise SpecError(f"budget {key} must be a non-negative integer")
    observables = list(doc.get("observables") or ["summary"])
    bad = set(observables) - OBSERVABLES
    if bad:
        raise SpecError(f"unknown observables {sorted(bad)}; known: {sorted(OBSERVABLES)}")
    output = dict(doc.get("output") or {})
    output.setdefault("csv", "runs.csv")
    if "trace" in observables:
        output.setdefault("trace", "trace.jsonl")
    output.setdefault("metadata", "metadata.json")
    spec = ExperimentSpec(name=str(doc.get("name", "experiment")), graphs=graphs, protocols=protocols,
                          seeds=seeds, budgets=budgets, observables=observables, output=output,
                          base_dir=base_dir)
    # resolve every graph now so invalid families or files never reach a run
    for gs in graphs:
        try:
            g = gs.build()
        except (G.GraphError, G.GraphGenerationError, OSError, TypeError, ValueError) as exc:
            raise SpecError(f"graph {gs}: {exc}") from exc
        for p in protocols:
            inputs = p.params.get("inputs")
            if inputs is not None and len(inputs) != g.n:
                raise SpecError(f"{p.id}: {len(inputs)} inputs for a graph with {g.n} nodes")
    return spec


def load_spec(path: str | Path) -> ExperimentSpec:
    doc, base = load_yaml(path)
    return parse_spec(doc, base_dir=base)

def load_yaml(path: str | Path) -> tuple[dict, Path]:
    """Read a YAML mapping; returns it with the directory used to resolve relative paths."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise SpecError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"{path}: expected a YAML mapping")
    return doc, path.parent


def graphs_from_doc(doc: dict, base_dir: Path) -> list[G.Graph]:
    """Build the graphs of a ``graph`` or ``graphs`` block, failing fast."""
    if ("graph" in doc) == ("graphs" in doc):
        raise SpecError("give exactly one of 'graph' or 'graphs'")
    blocks = doc["graphs"] if "graphs" in doc else [doc["graph"]]
    out = []
    for b in blocks:
        gs = _graph_spec(b, base_dir)
        try:
            out.append(gs.build())
        except (G.GraphError, G.GraphGenerationError, OSError, TypeError, ValueError) as exc:
            raise SpecError(f"graph {gs}: {exc}") from exc
    return out


def check_keys(doc: dict, allowed: set[str], what: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise SpecError(f"{what}: unknown keys {sorted(unknown)}")


def resolve_output(doc: dict, base_dir: Path, key: str, default: str) -> Path:
    p = Path((doc.get("output") or {}).get(key, default))
    return p if p.is_absolute() else base_dir / p
