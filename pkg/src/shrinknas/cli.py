"""Command-line entry points: benchmark generation/import, greedy
training, evolutionary search, reporting, and confidence curves.

Every command is deterministic under a fixed seed; all output files
carry the resolved-config hash and tool version.  Exit codes: 0 success,
2 usage error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys


from . import __version__
from .confidence import ConfidenceQuery, binomial_tail, confidence_curve
from .filter import load_checkpoint, save_checkpoint
from .metrics import precision_recall
from .oracle import (GroundTruthSplit, SupernetSim, TabularOracle,
                     generate_benchmark, import_nas_bench_macro)
from .pu_learning import is_weak_batch
from .search import (EvoConfig, GreedyTrainer, TrainConfig, nsga2_search,
                     report_percentile_histogram)
from .serialization import dump_json, load_json
from .space import SearchSpace, make_uniform_space

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml


def _config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _stamp(doc, cfg_obj):
    doc["tool_version"] = __version__
    doc["config_hash"] = _config_hash(cfg_obj)
    return doc


def _load_toml(path):
    with open(path, "rb") as f:
        return _toml.load(f)


def _space_from_args(args):
    if args.space:
        return SearchSpace.load(args.space)
    return make_uniform_space(args.layers, args.ops)


# -- subcommands -------------------------------------------------------------

def cmd_confidence(args):
    if args.curve:
        rows = confidence_curve(args.m, args.k)
        with open(args.curve, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["p", "P_good", "Q_weak"])
            for p, pg, qw in rows:
                w.writerow([f"{p:.4f}", f"{pg:.10f}", f"{qw:.10f}"])
        print(f"wrote curve for m={args.m}, k={args.k} to {args.curve}")
    if args.p is not None:
        q = ConfidenceQuery(args.m, args.k, args.p)
        value = binomial_tail(q.m, q.k, q.p)
        kind = "weak" if args.weak else "good"
        print(f"confidence_{kind}(m={q.m}, k={q.k}, prior={q.p}) = {value:.6f}")
    return 0


def _parse_duplicates(specs):
    out = []
    for s in specs or []:
        layer, src, dup = (int(t) for t in s.split(":"))
        out.append((layer, src, dup))
    return out


def cmd_gen_benchmark(args):
    space = _space_from_args(args)
    dups = _parse_duplicates(args.duplicate_ops)
    oracle = generate_benchmark(space, args.seed,
                                interaction_strength=args.interaction,
                                noise_amp=args.noise_amp, duplicate_pairs=dups)
    q = oracle.materialize()
    oracle.export(args.out)
    print(f"space size {len(q)}; quality mean {q.mean():.4f} "
          f"min {q.min():.4f} max {q.max():.4f}")
    print(f"wrote benchmark to {args.out}")
    return 0


def cmd_import_benchmark(args):
    space = SearchSpace.load(args.space)
    oracle = import_nas_bench_macro(args.input, space)
    oracle.export(args.out)
    print(f"imported {len(oracle.materialize())} architectures to {args.out}")
    return 0


def _train_config(args, file_cfg):
    tc = dict(file_cfg.get("train", {}))
    for key, flag in (("total_iterations", "iterations"),
                      ("eval_paths_per_round", "paths_per_round"),
                      ("hidden", "hidden"),
                      ("rejection_cap", "rejection_cap"),
                      ("merge_threshold", "merge_threshold")):
        v = getattr(args, flag, None)
        if v is not None:
            tc[key] = v
    vpu = dict(file_cfg.get("vpu", {}))
    if args.vpu_iterations is not None:
        vpu["iterations"] = args.vpu_iterations
    if args.batch_size is not None:
        vpu["batch_size"] = args.batch_size
    cfg = TrainConfig(**tc)
    if vpu:
        from .pu_learning import VPUConfig
        cfg.vpu = VPUConfig(**{**cfg.vpu.__dict__, **vpu})
    return cfg


def cmd_train(args):
    file_cfg = _load_toml(args.config) if args.config else {}
    cfg = _train_config(args, file_cfg)
    resolved = {"command": "train", "benchmark": args.benchmark, "seed": args.seed,
                "good_fraction": args.good_fraction, "sigma0": args.sigma0,
                "sigma1": args.sigma1, "train": cfg.__dict__, "vpu": cfg.vpu.__dict__}
    if args.dry_run:
        print("config ok")
        print(json.dumps(resolved, indent=2, default=str))
        return 0
    oracle = TabularOracle.load(args.benchmark)
    space = oracle.space
    split = (GroundTruthSplit.from_oracle(oracle, args.good_fraction)
             if oracle.materializable() else None)
    sim = SupernetSim(oracle, sigma0=args.sigma0, sigma1=args.sigma1,
                      total_steps=cfg.total_iterations, seed=args.seed)
    trainer = GreedyTrainer(space, sim, cfg, args.seed, split=split)
    if args.resume:
        trainer.restore(load_json(args.resume))
    trainer.run(pause_at=args.pause_at_iteration)
    import os
    os.makedirs(args.out_dir, exist_ok=True)
    ckpt = os.path.join(args.out_dir, "filter.json")
    save_checkpoint(ckpt, trainer.net, trainer.adam,
                    extra=_stamp({}, resolved))
    space.save(os.path.join(args.out_dir, "space.json"))
    dump_json(trainer.state_obj(), os.path.join(args.out_dir, "state.json"))
    with open(os.path.join(args.out_dir, "runlog.jsonl"), "w") as f:
        for ev in trainer.events:
            f.write(json.dumps(_stamp(dict(ev), resolved), sort_keys=True) + "\n")
    dump_json(_stamp({
        "iterations": trainer.iteration,
        "rounds": trainer.round_idx,
        "stopped_early": trainer.stopped,
        "rejections": trainer.rejection_total,
        "accepted_ranks": [int(r) for r in trainer.accepted_ranks],
    }, resolved), os.path.join(args.out_dir, "summary.json"))
    last = next((e for e in reversed(trainer.events) if e["type"] == "round"), None)
    if last and "precision" in last:
        print(f"final round precision={last['precision']:.4f} "
              f"recall={last['recall']:.4f}")
    print(f"wrote {args.out_dir}/filter.json, space.json, state.json, "
          f"runlog.jsonl, summary.json")
    return 0


def cmd_search(args):
    net = None
    if not args.no_filter:
        if not args.checkpoint:
            raise RuntimeError("search with the filter needs --checkpoint "
                               "(or pass --no-filter)")
        net, _, _ = load_checkpoint(args.checkpoint)
    oracle = TabularOracle.load(args.benchmark)
    space = SearchSpace.load(args.space) if args.space else oracle.space
    sim = SupernetSim(oracle, sigma0=args.sigma0, sigma1=args.sigma1,
                      total_steps=1, seed=args.seed)
    sim.advance()  # post-training regime: final noise level
    cfg = EvoConfig(population_size=args.population, eval_budget=args.budget,
                    cost_limit=args.cost_limit, use_filter=not args.no_filter)
    resolved = {"command": "search", "benchmark": args.benchmark,
                "seed": args.seed, "evo": cfg.__dict__}
    result = nsga2_search(space, sim, net, cfg, args.seed)
    doc = _stamp({
        "evaluations": result["evaluations"],
        "front": [{"arch": list(a), "rank": str(space.arch_to_rank(a)),
                   "quality": q, "cost": c} for a, q, c in result["front"]],
        "best": {"arch": list(result["best"][0]),
                 "quality": result["best"][1], "cost": result["best"][2]},
    }, resolved)
    dump_json(doc, args.out)
    print(f"{result['evaluations']} evaluations; front size {len(result['front'])}; "
          f"best quality {result['best'][1]:.4f} at cost {result['best'][2]:.1f}")
    print(f"wrote {args.out}")
    return 0


def cmd_report(args):
    import os
    os.makedirs(args.out_dir, exist_ok=True)
    oracle = TabularOracle.load(args.benchmark)
    resolved = {"command": "report", "benchmark": args.benchmark,
                "runlog": args.runlog, "summary": args.summary}
    report = {}
    if args.summary:
        summary = load_json(args.summary)
        hist = report_percentile_histogram(summary["accepted_ranks"], oracle)
        report["percentile"] = {"mean": hist["mean"], "median": hist["median"]}
        with open(os.path.join(args.out_dir, "percentile_histogram.csv"), "w",
                  newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_low", "bin_high", "count"])
            for lo, hi, c in zip(hist["edges"], hist["edges"][1:], hist["counts"]):
                w.writerow([f"{lo:.4f}", f"{hi:.4f}", c])
        print(f"mean percentile rank of sampled paths: {hist['mean']:.4f}")
    if args.checkpoint:
        net, _, _ = load_checkpoint(args.checkpoint)
        split = GroundTruthSplit.from_oracle(oracle, args.good_fraction)
        space = oracle.space
        archs = [space.rank_to_arch(r) for r in range(len(split.is_weak))]
        pred = is_weak_batch(net, archs)
        report["filter"] = precision_recall(split.is_weak, pred)
        print(f"filter precision={report['filter']['precision']:.4f} "
              f"recall={report['filter']['recall']:.4f}")
    if args.runlog:
        rounds = []
        with open(args.runlog) as f:
            for line in f:
                ev = json.loads(line)
                if ev.get("type") == "round":
                    rounds.append({k: ev.get(k) for k in
                                   ("round", "iteration", "q", "agreement",
                                    "precision", "recall", "f1")})
        report["rounds"] = rounds
        with open(os.path.join(args.out_dir, "round_trace.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["round", "iteration", "q", "agreement", "precision", "recall"])
            for r in rounds:
                w.writerow([r["round"], r["iteration"], r["q"], r["agreement"],
                            r.get("precision"), r.get("recall")])
    dump_json(_stamp(report, resolved), os.path.join(args.out_dir, "metrics.json"))
    print(f"wrote {args.out_dir}/metrics.json")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser():
    top = argparse.ArgumentParser(prog="shrinknas",
                                  description="PU-filtered NAS space shrinkage "
                                              "over tabular benchmarks")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("confidence", help="binomial-tail sampling confidence")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p", type=float, help="prior (good, or weak with --weak)")
    p.add_argument("--weak", action="store_true")
    p.add_argument("--curve", help="write p-vs-confidence CSV here")
    p.set_defaults(func=cmd_confidence)

    p = sub.add_parser("gen-benchmark", help="generate a synthetic tabular benchmark")
    p.add_argument("--space", help="space definition file (JSON/TOML)")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--ops", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--interaction", type=float, default=0.0)
    p.add_argument("--noise-amp", type=float, default=0.01)
    p.add_argument("--duplicate-ops", action="append", metavar="LAYER:SRC:DUP",
                   help="give two ops identical utility (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_benchmark)

    p = sub.add_parser("import-benchmark", help="import an external tabular benchmark")
    p.add_argument("--space", required=True)
    p.add_argument("--input", required=True, help="JSON map arch-string -> accuracy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_benchmark)

    p = sub.add_parser("train", help="greedy supernet training with the path filter")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--config", help="TOML config; flags override")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int)
    p.add_argument("--paths-per-round", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--rejection-cap", type=int)
    p.add_argument("--merge-threshold", type=float)
    p.add_argument("--vpu-iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--good-fraction", type=float, default=0.10)
    p.add_argument("--sigma0", type=float, default=0.1)
    p.add_argument("--sigma1", type=float, default=0.01)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--resume", help="state.json from a paused run")
    p.add_argument("--pause-at-iteration", type=int)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("search", help="filter-assisted NSGA-II search")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--space", help="merged space file (defaults to benchmark's)")
    p.add_argument("--checkpoint", help="trained filter checkpoint")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--budget", type=int, default=500)
    p.add_argument("--population", type=int, default=50)
    p.add_argument("--cost-limit", type=float)
    p.add_argument("--sigma0", type=float, default=0.01)
    p.add_argument("--sigma1", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("report", help="metrics and plot data from run artifacts")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--runlog")
    p.add_argument("--summary")
    p.add_argument("--checkpoint")
    p.add_argument("--good-fraction", type=float, default=0.10)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return top


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RuntimeError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
