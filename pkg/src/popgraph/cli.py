"""Command-line harness: ``popgraph {run,mixing,audit,gap,probe} CONFIG``.

Every command reads one YAML file.  Data files are byte-identical across
reruns of the same file; timestamps live only in the metadata sidecar.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, interchange
from .clock import measure_gap_process
from .config import SpecError, check_keys, graphs_from_doc, load_spec, load_yaml, parse_seeds, resolve_output
from .engine import SCHEMA_VERSION, SUMMARY_COLUMNS
from .io import CsvStream, JsonlStream, fmt_float, write_csv, write_json, write_metadata
from .protocols.registry import run_cell
from .rng import base_seed
from .simulation import ParamsError, derive_params, schedule_uniformity_probe

log = logging.getLogger("popgraph")

EXIT_OK, EXIT_SPEC, EXIT_INFRA = 0, 2, 3


# ---------------------------------------------------------------------------
# run


def _cell(task):
    pid, params, gspec, seed, budgets, trace_every = task
    g = gspec.build()
    opts = dict(params)
    if "max_steps" in budgets:
        opts.setdefault("max_steps", budgets["max_steps"])
    if "rounds" in budgets:
        opts.setdefault("rounds", budgets["rounds"])
    summary, trace = run_cell(pid, g, seed, opts, trace_every=trace_every)
    return summary.row(), [rec.to_json() for rec in trace], summary.protocol, summary.graph, seed


def cmd_run(args) -> int:
    spec = load_spec(args.config)
    out_dir = Path(args.out_dir) if args.out_dir else None

    def where(key):
        p = spec.path(key)
        return out_dir / p.name if out_dir is not None and p is not None else p

    tasks = [(p.id, p.params, gs, s, spec.budgets, spec.trace_every) for _, p, gs, s in spec.cells()]
    started = time.time()
    csv_out = CsvStream(where("csv"), SUMMARY_COLUMNS)
    trace_out = JsonlStream(where("trace")) if spec.trace_every else None
    try:
        if args.jobs > 1:
            pool = ProcessPoolExecutor(max_workers=args.jobs)
            results = pool.map(_cell, tasks)
        else:
            pool = None
            results = map(_cell, tasks)
        for i, (row, trace, pid, gname, seed) in enumerate(results):
            csv_out.write(row)
            if trace_out is not None:
                for line in trace:
                    trace_out.write_line(f'{{"cell": {i}, "protocol": "{pid}", "seed": {seed}, "record": {line}}}')
            log.info("cell %d/%d %s on %s seed %d done", i + 1, len(tasks), pid, gname, seed)
        if pool is not None:
            pool.shutdown()
    finally:
        csv_out.close()
        if trace_out is not None:
            trace_out.close()
    write_metadata(where("metadata"), command="run", name=spec.name, cells=len(tasks), jobs=args.jobs,
                   config=str(args.config), elapsed_seconds=round(time.time() - started, 3))
    return EXIT_OK


# ---------------------------------------------------------------------------
# mixing


MIXING_KEYS = {"graph", "k", "eps", "mode", "t_max", "points", "samples", "seed", "output"}


def cmd_mixing(args) -> int:
    doc, base = load_yaml(args.config)
    check_keys(doc, MIXING_KEYS, "mixing config")
    (g,) = graphs_from_doc(doc, base)
    k = int(doc.get("k", 1))
    eps = float(doc.get("eps", 0.25))
    mode = doc.get("mode", "exact")
    if mode not in ("exact", "sampled"):
        raise SpecError(f"mode must be 'exact' or 'sampled', got {mode!r}")
    if not 0 < eps < 0.5:
        raise SpecError("eps must lie in (0, 1/2)")
    if mode == "exact" and g.n * k > interchange.EXACT_MAX_N:
        raise SpecError(f"exact mode needs nk <= {interchange.EXACT_MAX_N}, got {g.n * k}")
    csv_path = resolve_output(doc, base, "csv", "mixing.csv")
    summary_path = resolve_output(doc, base, "summary", "mixing.json")
    if mode == "exact":
        tau = interchange.exact_mixing_time(g, k, eps)
        t_max = int(doc.get("t_max", max(2 * tau, 10)))
        rows = [(SCHEMA_VERSION, t, fmt_float(d1), fmt_float(d2)) for t, d1, d2 in interchange.mixing_curve(g, k, t_max)]
        write_csv(csv_path, ("schema_version", "t", "d1", "d2"), rows)
        extra = {}
    else:
        samples = int(doc.get("samples", 20_000))
        seed = base_seed(int(doc.get("seed", 0)))
        tau = interchange.sampled_mixing_time(g, k, eps, samples=samples, seed=seed)
        points = max(int(doc.get("points", 32)), 10)
        t_max = int(doc.get("t_max", 2 * tau))
        grid = sorted(set(np.linspace(0, t_max, points + 1).round().astype(np.int64).tolist()))
        tv = interchange.sampled_tv_curve(g, k, grid, samples, seed)
        write_csv(csv_path, ("schema_version", "t", "d1"),
                  [(SCHEMA_VERSION, t, fmt_float(2 * d)) for t, d in zip(grid, tv.tolist())])
        extra = {"samples": samples, "seed": seed, "statistic": "single-card projection"}
    write_json(summary_path, {"graph": g.name, "n": g.n, "k": k, "eps": eps, "mode": mode, "tau": tau, **extra})
    print(f"{g.name} k={k} tau({eps}) = {tau}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# audit


AUDIT_KEYS = {"graph", "graphs", "meeting_constant", "output"}


def cmd_audit(args) -> int:
    doc, base = load_yaml(args.config)
    check_keys(doc, AUDIT_KEYS, "audit config")
    graphs = graphs_from_doc(doc, base)
    for g in graphs:
        if g.n > analysis.HITTING_MAX_N:
            raise SpecError(f"{g.name}: exact solvers need n <= {analysis.HITTING_MAX_N}")
    c = doc.get("meeting_constant")
    records = []
    hit_rows, meet_rows = [], []
    for g in graphs:
        records += [a.to_dict() for a in analysis.audit_graph(g, meeting_constant=c)]
        H = analysis.hitting_times(g).H
        hit_rows += [(SCHEMA_VERSION, g.name, u, v, fmt_float(H[u, v])) for u in range(g.n) for v in range(g.n)]
        if g.n <= analysis.MEETING_MAX_N:
            M = analysis.meeting_times(g).M
            meet_rows += [(SCHEMA_VERSION, g.name, a, b, fmt_float(M[a, b])) for a in range(g.n) for b in range(g.n)]
    write_json(resolve_output(doc, base, "json", "audit.json"), records)
    write_csv(resolve_output(doc, base, "hitting_csv", "hitting.csv"),
              ("schema_version", "graph", "u", "v", "hitting_time"), hit_rows)
    write_csv(resolve_output(doc, base, "meeting_csv", "meeting.csv"),
              ("schema_version", "graph", "a", "b", "meeting_time"), meet_rows)
    failed = [r for r in records if not r["pass"]]
    for r in records:
        print(f"{r['graph']:24s} {r['lemma']:16s} lhs={r['lhs']:.6g} rhs={r['rhs']:.6g} {'PASS' if r['pass'] else 'FAIL'}")
    print(f"{len(records) - len(failed)}/{len(records)} audits pass")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gap


GAP_KEYS = {"graph", "steps", "seeds", "gamma", "phi", "record_every", "c_kappa", "output"}


def cmd_gap(args) -> int:
    doc, base = load_yaml(args.config)
    check_keys(doc, GAP_KEYS, "gap config")
    (g,) = graphs_from_doc(doc, base)
    steps = int(doc.get("steps", 100_000))
    every = int(doc.get("record_every", max(1, steps // 1000)))
    seeds = parse_seeds(doc.get("seeds", [0]))
    rows, summaries = [], []
    for s in seeds:
        tr = measure_gap_process(g, steps, s, gamma=doc.get("gamma"), phi=doc.get("phi"), record_every=every,
                                 c_kappa=float(doc.get("c_kappa", 4.0)))
        rows += [(SCHEMA_VERSION, s, t, gap) for t, gap in tr.rows()]
        summaries.append({"seed": s, "steps": tr.steps, "max_gap": tr.max_gap, "gamma": tr.gamma, "phi": tr.phi,
                          "increment_violations": tr.increment_violations,
                          "coupling_violations": tr.coupling_violations, "coupled_steps": tr.coupled_steps,
                          "first_gap_at_gamma": tr.first_gap_at_gamma, "warnings": tr.warnings})
        print(f"seed {s}: max gap {tr.max_gap} (gamma {tr.gamma}), "
              f"increment violations {tr.increment_violations}, coupling violations {tr.coupling_violations}")
    write_csv(resolve_output(doc, base, "csv", "gap.csv"), ("schema_version", "seed", "t", "gap"), rows)
    write_json(resolve_output(doc, base, "summary", "gap.json"), {"graph": g.name, "runs": summaries})
    return EXIT_OK


# ---------------------------------------------------------------------------
# probe


PROBE_KEYS = {"graph", "k", "R", "eps", "lam", "tau_source", "tau_mix", "c_kappa", "C1", "samples", "seed", "theta", "output"}


def cmd_probe(args) -> int:
    doc, base = load_yaml(args.config)
    check_keys(doc, PROBE_KEYS, "probe config")
    (g,) = graphs_from_doc(doc, base)
    k = int(doc.get("k", 1))
    try:
        params = derive_params(g, k, int(doc.get("R", 1)), lam=float(doc.get("lam", 1.0)),
                               tau_source=doc.get("tau_source", "empirical"), tau_mix=doc.get("tau_mix"),
                               eps=doc.get("eps"), c_kappa=float(doc.get("c_kappa", 4.0)),
                               C1=float(doc.get("C1", 1.0)))
    except ParamsError as exc:
        raise SpecError(str(exc)) from exc
    samples = int(doc.get("samples", 100_000))
    seed = base_seed(int(doc.get("seed", 0)))
    theta = doc.get("theta")
    try:
        res = schedule_uniformity_probe(g, k, params, samples, seed, theta=theta)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    size = g.n * k
    perms = interchange.all_permutations(size)
    write_csv(resolve_output(doc, base, "csv", "probe.csv"), ("schema_version", "rank", "schedule", "frequency"),
              [(SCHEMA_VERSION, r, " ".join(map(str, perms[r].tolist())), fmt_float(f))
               for r, f in enumerate(res.histogram.tolist())])
    write_json(resolve_output(doc, base, "summary", "probe.json"),
               {"graph": g.name, "k": k, "samples": samples, "seed": seed, "tv": res.tv,
                "max_steps": res.max_steps, "theta_used": params.theta if theta is None else int(theta),
                "params": params.to_dict()})
    print(f"{g.name} k={k}: TV(first schedule, uniform) = {res.tv:.5f} over {samples} samples")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="popgraph", description="Population protocols on graphs: experiments and oracles.")
    ap.add_argument("--version", action="version", version=f"popgraph {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run every (protocol, graph, seed) cell of an experiment file")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (cells run in parallel, output stays ordered)")
    p.add_argument("--out-dir", help="write outputs here instead of the paths in the config")
    p.set_defaults(func=cmd_run)
    for name, func, text in (("mixing", cmd_mixing, "interchange mixing curve and tau(eps)"),
                             ("audit", cmd_audit, "exact hitting/meeting-time bound audits"),
                             ("gap", cmd_gap, "two-choice clock gap trajectories"),
                             ("probe", cmd_probe, "uniformity of the first simulated schedule")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_SPEC
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (interchange.SizeError, analysis.SolverSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
