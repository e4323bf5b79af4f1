"""Command-line entry point: ``hypotopo <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .traces import TraceFormatError, read_traces, write_traces

log = logging.getLogger("hypotopo")

# flag dest -> config key
CONFIG_FLAGS = {
    "seed": "seed", "workers": "workers", "k": "k", "theta_merge": "theta_merge",
    "alpha": "alpha", "beta": "beta", "nu": "nu", "K": "K", "delta_loop": "delta_loop",
    "budget": "budget", "embed_mode": "embed_mode", "relation_mode": "relation_mode",
}


def _common(p: argparse.ArgumentParser, traces: bool = True, out: bool = True) -> None:
    p.add_argument("--config", help="flat key=value config file")
    if traces:
        p.add_argument("--traces", required=True, help="JSONL trace file")
    if out:
        p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--k", type=int, help="nearest-neighbour count")
    p.add_argument("--theta-merge", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--K", type=int, help="top-K features kept per dimension")
    p.add_argument("--delta-loop", type=float)
    p.add_argument("--budget", type=int, help="relation request cap per instance")
    p.add_argument("--embed-mode", choices=["file", "remote", "fallback"])
    p.add_argument("--relation-mode", choices=["rule", "remote"])
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hypotopo", description="Topological aggregation of multi-path reasoning traces.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline: reports, summary CSV and diagram CSVs")
    _common(p)
    p = sub.add_parser("ingest-validate", help="validate a trace file")
    _common(p, out=False)
    p = sub.add_parser("build-graph", help="write the merged hypothesis graph of every instance")
    _common(p)
    p = sub.add_parser("persistence", help="write persistence diagram CSVs")
    _common(p)
    p = sub.add_parser("skeleton", help="write skeleton reports")
    _common(p)
    p = sub.add_parser("answer", help="print instance_id,winner lines")
    _common(p, out=False)

    p = sub.add_parser("stats", help="statistics over a batch summary CSV")
    _common(p, traces=False)
    p.add_argument("--summary", required=True, help="summary.csv produced by `run`")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--backbone", default="", help="model tag carried into the report")

    p = sub.add_parser("perturb", help="embedding-noise stability of H1 diagrams")
    _common(p)
    p.add_argument("--sigma", type=float, action="append", help="noise level (repeatable; default 0.01 0.05 0.1)")
    p.add_argument("--trials", type=int, default=5)

    p = sub.add_parser("synth", help="generate a synthetic trace corpus")
    _common(p, traces=False)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--mixed", action="store_true", help="half looped/correct, half loopless/corrupted")
    p.add_argument("--no-loop", action="store_true")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--distractor-confidence", type=float, default=0.3)
    p.add_argument("--output", help="trace file to write (default: OUT/traces.jsonl)")
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {key: getattr(args, dest) for dest, key in CONFIG_FLAGS.items() if getattr(args, dest, None) is not None}
    return load_config(args.config, overrides)


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _diagram_csv(result) -> str:
    rows = ["dimension,birth,death,lifespan"]
    for dim, b, d, life in result.diagram.to_rows():
        rows.append(f"{dim},{b:.10g},{d:.10g},{life:.10g}")
    return "\n".join(rows) + "\n"


def _load(args):
    try:
        return read_traces(args.traces)
    except OSError as exc:
        raise SystemExit(f"error: cannot read {args.traces}: {exc.strerror or exc}")
    except TraceFormatError as exc:
        raise SystemExit(f"error: {args.traces}: {exc}")


def _batch(args, cfg):
    from .pipeline import run_batch

    outcome = run_batch(_load(args), cfg)
    for iid, err in sorted(outcome.errors.items()):
        print(f"instance {iid} failed: {err}", file=sys.stderr)
    return outcome


def cmd_run(args, cfg) -> int:
    from .pipeline import dump_report, report_filename

    outcome = _batch(args, cfg)
    for r in outcome.results:
        _write(os.path.join(args.out, "reports", report_filename(r.instance_id)), dump_report(r))
        _write(os.path.join(args.out, "diagrams", report_filename(r.instance_id)[:-5] + ".csv"), _diagram_csv(r))
    _write(os.path.join(args.out, "summary.csv"), outcome.summary_csv())
    _write(os.path.join(args.out, "config.txt"), cfg.to_text())
    if outcome.errors:
        _write(os.path.join(args.out, "errors.json"), json.dumps(outcome.errors, indent=1, sort_keys=True))
    print(f"{len(outcome.results)} instances processed, {len(outcome.errors)} failed -> {args.out}")
    return 1 if outcome.errors else 0


def cmd_validate(args, cfg) -> int:
    insts = _load(args)
    n_paths = sum(i.n_paths for i in insts)
    n_steps = sum(len(p) for i in insts for p in i.paths)
    print(f"ok: {len(insts)} instances, {n_paths} paths, {n_steps} steps")
    return 0


def cmd_build_graph(args, cfg) -> int:
    from .ghg import build_graph
    from .pipeline import _merge_embeddings, make_embedder_from_config, report_filename

    emb = make_embedder_from_config(cfg)
    for inst in _load(args):
        g = build_graph(inst, cfg.merge_policy(), _merge_embeddings(inst, cfg, emb))
        _write(os.path.join(args.out, "graphs", report_filename(inst.instance_id)), g.to_json())
    return 0


def cmd_persistence(args, cfg) -> int:
    from .pipeline import report_filename

    outcome = _batch(args, cfg)
    for r in outcome.results:
        _write(os.path.join(args.out, "diagrams", report_filename(r.instance_id)[:-5] + ".csv"), _diagram_csv(r))
    return 1 if outcome.errors else 0


def cmd_skeleton(args, cfg) -> int:
    from .pipeline import report_filename

    outcome = _batch(args, cfg)
    for r in outcome.results:
        doc = {"instance_id": r.instance_id, "skeletons": r.report()["skeletons"]}
        _write(os.path.join(args.out, "skeletons", report_filename(r.instance_id)), json.dumps(doc, indent=1, sort_keys=True))
    return 1 if outcome.errors else 0


def cmd_answer(args, cfg) -> int:
    outcome = _batch(args, cfg)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["instance_id", "winner"])
    for r in outcome.results:
        w.writerow([r.instance_id, r.winner])
    return 1 if outcome.errors else 0


def cmd_stats(args, cfg) -> int:
    from .stats import build_report, read_summary, write_stats_outputs

    try:
        samples = read_summary(args.summary)
    except OSError as exc:
        raise SystemExit(f"error: cannot read {args.summary}: {exc.strerror or exc}")
    except (KeyError, ValueError) as exc:
        raise SystemExit(f"error: malformed summary {args.summary}: {exc}")
    rep = build_report(samples, args.bins, args.backbone)
    write_stats_outputs(rep, samples, args.out)
    print(json.dumps({k: v for k, v in rep.to_dict().items() if k in ("n", "spearman_rho", "odds_ratio", "auc")}, sort_keys=True))
    return 0


def cmd_perturb(args, cfg) -> int:
    from .pipeline import make_embedder_from_config, run_instance
    from .stats import perturb_and_compare

    sigmas = args.sigma or [0.01, 0.05, 0.1]
    emb = make_embedder_from_config(cfg)
    rows = ["instance_id,sigma,trial,bottleneck,min_selected_h1_lifespan,stable"]
    for inst in _load(args):
        base = run_instance(inst, cfg, emb)
        for s in sigmas:
            res = perturb_and_compare(inst, s, cfg.seed, args.trials, cfg, emb, cfg.workers, baseline=base)
            for t, d in enumerate(res.distances):
                rows.append(f"{inst.instance_id},{s:.10g},{t},{d:.10g},{res.min_selected_h1_lifespan:.10g},{int(res.stable)}")
    _write(os.path.join(args.out, "perturbation.csv"), "\n".join(rows) + "\n")
    return 0


def cmd_synth(args, cfg) -> int:
    from .synth import SynthConfig, generate, generate_mixed

    if args.mixed:
        insts = generate_mixed(args.n, cfg.seed, distractor_confidence=args.distractor_confidence, noise=args.noise)
    else:
        insts = generate(SynthConfig(seed=cfg.seed, n_instances=args.n, planted_loop=not args.no_loop,
                                     noise=args.noise, distractor_confidence=args.distractor_confidence))
    path = args.output or os.path.join(args.out, "traces.jsonl")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    write_traces(path, insts)
    print(f"wrote {len(insts)} instances -> {path}")
    return 0


COMMANDS = {
    "run": cmd_run, "ingest-validate": cmd_validate, "build-graph": cmd_build_graph,
    "persistence": cmd_persistence, "skeleton": cmd_skeleton, "answer": cmd_answer,
    "stats": cmd_stats, "perturb": cmd_perturb, "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config:
        sys.stdout.write(cfg.to_text())
        return 0
    try:
        return COMMANDS[args.command](args, cfg)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
