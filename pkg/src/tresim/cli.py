"""Command line: ``tresim run|sweep|validate|tco``.

Exit codes: 0 success, 2 config error, 3 ingest error, 4 simulation abort.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Optional, Sequence

from . import __version__
from .config import Config, ConfigError, load_config, read_trace_text
from .domain import LedgerError, PolicyParams, validate_workload
from .engine import SimulationError
from .ingest import IngestError, parse_dag, parse_swf, scale_trace
from .metrics import CSV_COLUMNS, report_rows, savings_vs_baseline, tco_dcs, tco_ssp, to_csv, to_table
from .models import ModelKind, ScenarioConfig, run_scenario, simulate
from .policy import LifecycleError

EXIT_CONFIG, EXIT_INGEST, EXIT_SIM = 2, 3, 4
SWEEP_COLUMNS = CSV_COLUMNS + ("error",)


def _apply_flags(sc: ScenarioConfig, args) -> ScenarioConfig:
    kw = {}
    if getattr(args, "strict_scan", False):
        kw["strict_scan"] = True
    if getattr(args, "quantum", None) is not None:
        kw["lease_quantum"] = args.quantum
    if getattr(args, "trace_dump", False):
        kw["trace"] = True
    return replace(sc, **kw) if kw else sc


def _emit(text: str, out_dir: Optional[str], fname: str) -> None:
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def cmd_run(cfg: Config, args) -> int:
    sc = _apply_flags(cfg.scenario, args)
    runs = []
    for model in cfg.models:
        res = run_scenario(sc, model)
        for e in sc.entries:
            p = e.params if model is ModelKind.DSP else None
            runs.append((res.reports[e.name], p and p.initial_resources, p and p.threshold_ratio))
        if len(sc.entries) > 1:
            runs.append((res.provider, None, None))
        if sc.trace:
            _emit(res.trace, args.out, f"trace_{model.value}.tsv")
    rows = report_rows(cfg.name, runs)
    _emit(to_csv(rows), args.out, "report.csv")
    sys.stdout.write(to_table(rows))
    return 0


def _sweep_point(job: tuple) -> tuple:
    sc, name, b, r = job
    entry = sc.entry(name)
    params = PolicyParams(b, r, entry.params.scan_interval, entry.params.idle_check_interval)
    try:
        res = run_scenario(replace(sc, entries=(replace(entry, params=params),)), ModelKind.DSP)
        return b, r, res.reports[name], ""
    except (SimulationError, LedgerError, LifecycleError) as e:
        return b, r, None, f"{type(e).__name__}: {e}"


def sweep_rows(cfg: Config, sc: ScenarioConfig, parallel: int = 1) -> list[dict]:
    """One DSP run per (B, R) on the sweep TRE alone, ordered by (B, R)."""
    sw = cfg.sweep
    entry = sc.entry(sw.tre)
    if entry.params is None:
        entry = replace(entry, params=PolicyParams.for_kind(entry.workload.kind, 1, 1.0))
        sc = replace(sc, entries=tuple(entry if e.name == sw.tre else e for e in sc.entries))
    grid = sorted((b, r) for b in sw.initial_resources for r in sw.threshold_ratios)
    jobs = [(sc, sw.tre, b, r) for b, r in grid]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]

    baseline = None
    if entry.fixed_size is not None:
        base = simulate(ModelKind.DCS, entry.workload, size=entry.fixed_size, lifetime=entry.lifetime,
                        lease_quantum=sc.lease_quantum)
        baseline = base.billed_node_hours
    rows = []
    for b, r, rep, err in results:
        if rep is None:
            rows.append({"scenario": cfg.name, "model": "dsp", "workload": sw.tre, "B": b, "R": r, "error": err})
            continue
        row = report_rows(cfg.name, [(rep, b, r)])[0]
        if baseline:
            row["savings_pct"] = savings_vs_baseline(rep, baseline)
        row["error"] = ""
        rows.append(row)
    return rows


def best_tradeoff(rows: Sequence[dict], tolerance: float = 0.02) -> Optional[dict]:
    """Cheapest point whose throughput is within ``tolerance`` of the best one.

    Throughput is tasks/second when reported, else completed jobs. Ties go to
    the smaller B, then the smaller R.
    """
    ok = [r for r in rows if not r.get("error")]
    if not ok:
        return None
    perf = lambda r: r["tasks_per_second"] if r.get("tasks_per_second") is not None else r["completed_jobs"]
    top = max(perf(r) for r in ok)
    good = [r for r in ok if perf(r) >= (1 - tolerance) * top]
    return min(good, key=lambda r: (r["billed_node_hours"], r["B"], r["R"]))


def cmd_sweep(cfg: Config, args) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep needs a [sweep] section")
    rows = sweep_rows(cfg, _apply_flags(cfg.scenario, args), args.parallel or os.cpu_count() or 1)
    _emit(to_csv(rows, SWEEP_COLUMNS), args.out, "sweep.csv")
    sys.stdout.write(to_table(rows, SWEEP_COLUMNS))
    best = best_tradeoff(rows)
    if best is not None:
        print(f"best tradeoff: {PolicyParams(best['B'], best['R']).label}")
    return 0


def cmd_tco(cfg: Config, args) -> int:
    if cfg.tco is None:
        raise ConfigError("tco needs a [tco] section")
    text = f"tco_dcs_monthly,{tco_dcs(cfg.tco):g}\ntco_ssp_monthly,{tco_ssp(cfg.tco):g}\n"
    _emit(text, args.out, "tco.csv")
    sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    text, fname = read_trace_text(args.trace, os.getcwd())
    if fname.endswith(".dag") or args.kind == "mtc":
        w = parse_dag(text, fname)
    else:
        w = parse_swf(text, fname)
        if args.scale_to:
            w = scale_trace(w, args.scale_to)
    problems = validate_workload(w, args.max_nodes)
    for v in problems:
        print(f"{v.rule}\tjob {v.job_id}\t{v.detail}")
    print(f"{fname}: {len(w.jobs)} jobs, max nodes {w.max_nodes}, skipped lines {w.skipped_lines}, "
          f"{len(problems)} violation(s)")
    return EXIT_INGEST if problems else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tresim", description="usage-model simulator for thin runtime environments")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p):
        p.add_argument("config")
        p.add_argument("--out", metavar="DIR", help="write CSV (and traces) here")
        p.add_argument("--strict-scan", action="store_true", help="start at most one job per scheduling pass")
        p.add_argument("--quantum", type=int, metavar="SECONDS", help="lease billing quantum")

    p = sub.add_parser("run", help="run every configured model")
    common(p)
    p.add_argument("--trace-dump", action="store_true", help="write the per-event trace for each model")
    p = sub.add_parser("sweep", help="DSP parameter sweep over (B, R)")
    common(p)
    p.add_argument("--parallel", type=int, metavar="N", help="worker processes (default: CPU count)")
    p = sub.add_parser("tco", help="monthly cost of owned vs leased resources")
    p.add_argument("config")
    p.add_argument("--out", metavar="DIR")
    p = sub.add_parser("validate", help="check a trace or DAG file")
    p.add_argument("trace", help="path, or builtin:nasa|blue|montage")
    p.add_argument("--kind", choices=["htc", "mtc"])
    p.add_argument("--scale-to", type=int, metavar="NODES")
    p.add_argument("--max-nodes", type=int, metavar="NODES", help="largest attainable job size")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "validate":
            return cmd_validate(args)
        cfg = load_config(args.config)
        if getattr(args, "quantum", None) is not None and args.quantum < 1:
            raise ConfigError("--quantum must be >= 1")
        return {"run": cmd_run, "sweep": cmd_sweep, "tco": cmd_tco}[args.verb](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestError as e:
        print(f"ingest error: {e}", file=sys.stderr)
        return EXIT_INGEST
    except (SimulationError, LedgerError, LifecycleError) as e:
        print(f"simulation aborted: {e}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
