"""Command-line orchestration.

Subcommands:

  sweep            solve the dual-parameter sweep and persist it
  safe-sets        build risk surfaces and safe-set masks from a sweep
  deploy           synthesize a pre-commitment policy and roll it out
  oracle           run the tiny-instance verification corpus
  compare-designs  safe-set cell counts across the four stormwater designs

Artifacts are byte-deterministic for a fixed config and seed (timing goes
to stderr only); every file embeds the resolved config hash.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import artifacts, config as config_mod
from ._kernels import backend
from .config import ConfigError
from .oracle import (OracleError, OracleSizeError, exact_optimal_cvar,
                     generate_corpus, load_corpus, save_corpus)
from .rollout import estimate_risk, rollout, synthesize_policy
from .solver import extract_safe_set, risk_value, sweep

_ORACLE_ALPHAS = (0.05, 0.25, 0.5, 0.99, 1.0)


def _fmt_level(value: float) -> str:
    return repr(float(value))


def _load(args):
    try:
        cfg = config_mod.load_config(args.config)
    except ConfigError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: {exc}") from exc
    if getattr(args, "threads", None):
        cfg["threads"] = int(args.threads)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = int(args.seed)
    if getattr(args, "alpha", None):
        cfg["alphas"] = [float(a) for a in args.alpha.split(",")]
    if getattr(args, "r", None):
        cfg["rs"] = [float(r) for r in args.r.split(",")]
    if getattr(args, "x0", None):
        cfg["deploy"]["x0"] = [float(v) for v in args.x0.split(",")]
    if getattr(args, "rollouts", None) is not None:
        cfg["deploy"]["rollouts"] = int(args.rollouts)
    config_mod.resolve_config(cfg)  # re-validate after overrides
    return cfg


def _prepare(cfg):
    model = config_mod.build_model(cfg)
    grid = config_mod.build_grid(cfg, model)
    return model, grid, config_mod.config_hash(cfg)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    model, grid, chash = _prepare(cfg)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    print(f"sweep: {grid.s_axis.size} dual parameters, backend={backend()}",
          file=sys.stderr)
    dsweep = sweep(model, grid, threads=cfg["threads"], progress=True)
    artifacts.write_sweep(args.out, dsweep, grid, chash)
    if cfg["flags"]["persist_tables"]:
        from .dp import precompute_transitions, value_iteration, write_tables_csv

        trans = precompute_transitions(model, grid)
        for s in grid.s_axis:
            vtable, ptable = value_iteration(float(s), model, grid, trans)
            write_tables_csv(f"{args.out}/tables_s={_fmt_level(s)}.csv",
                             vtable, ptable, grid, chash)
    print(f"sweep finished in {time.perf_counter() - t0:.2f}s -> {args.out}",
          file=sys.stderr)
    return 0


def cmd_safe_sets(args) -> int:
    cfg = _load(args)
    model, grid, chash = _prepare(cfg)
    config_mod.rs_within_range(cfg, model)
    sweep_dir = args.sweep or args.out
    try:
        dsweep, sweep_grid, _ = artifacts.read_sweep(sweep_dir)
    except FileNotFoundError as exc:
        print(f"error: no sweep found in {sweep_dir} "
              f"(run `cvarsafe sweep` first): {exc}", file=sys.stderr)
        return 1
    if sweep_grid.n_xnodes != grid.n_xnodes:
        print("error: sweep grid does not match the configured grid",
              file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    counts = {}
    for alpha in cfg["alphas"]:
        surface = risk_value(dsweep, alpha, model.g_lower)
        a_tag = _fmt_level(alpha)
        artifacts.write_surface_csv(
            f"{args.out}/surface_alpha={a_tag}.csv", surface, grid, chash)
        for r in cfg["rs"]:
            mask = extract_safe_set(surface, r)
            artifacts.write_mask_csv(
                f"{args.out}/mask_alpha={a_tag}_r={_fmt_level(r)}.csv",
                mask, grid, chash)
            counts[f"alpha={a_tag},r={_fmt_level(r)}"] = mask.cell_count
    summary = {
        "schema_version": artifacts.SCHEMA_VERSION,
        "config_hash": chash,
        "design": cfg["model"]["design"],
        "grid": cfg["grid"],
        "alphas": [float(a) for a in cfg["alphas"]],
        "rs": [float(r) for r in cfg["rs"]],
        "cell_counts": counts,
        "total_cells": grid.n_xnodes,
    }
    artifacts.write_json(f"{args.out}/summary.json", summary)
    print(f"safe-sets finished in {time.perf_counter() - t0:.2f}s -> {args.out}",
          file=sys.stderr)
    return 0


def cmd_deploy(args) -> int:
    cfg = _load(args)
    if getattr(args, "deploy_alpha", None) is not None:
        cfg["deploy"]["alpha"] = float(args.deploy_alpha)
        config_mod.resolve_config(cfg)
    model, grid, chash = _prepare(cfg)
    os.makedirs(args.out, exist_ok=True)
    t0 = time.perf_counter()
    if args.sweep:
        dsweep, _, _ = artifacts.read_sweep(args.sweep)
    else:
        dsweep = sweep(model, grid, threads=cfg["threads"])
    x0 = np.asarray(cfg["deploy"]["x0"], dtype=np.float64)
    alpha = float(cfg["deploy"]["alpha"])
    policy = synthesize_policy(x0, alpha, dsweep, model, grid)
    num = int(cfg["deploy"]["rollouts"])
    summary = {
        "schema_version": artifacts.SCHEMA_VERSION,
        "config_hash": chash,
        "alpha": alpha,
        "x0": x0.tolist(),
        "s_star": policy.s_star,
        "dp_value": policy.dp_value,
        "num_rollouts": num,
        "seed": int(cfg["seed"]),
    }
    if num > 0:
        batch = rollout(policy, num, cfg["seed"], model,
                        reoptimize=bool(cfg["deploy"]["reoptimize"]))
        stats = estimate_risk(batch, alpha, model.g_lower, policy.s_star)
        summary.update(stats)
        summary["consistency_gap"] = abs(stats["excess_hat"] - policy.dp_value)
        artifacts.write_rollouts_csv(f"{args.out}/rollouts.csv", batch, chash,
                                     max_rollouts=cfg["deploy"]["csv_max"])
    artifacts.write_json(f"{args.out}/deploy_summary.json", summary)
    print(f"deploy finished in {time.perf_counter() - t0:.2f}s -> {args.out}",
          file=sys.stderr)
    return 0


def cmd_oracle(args) -> int:
    t0 = time.perf_counter()
    if args.corpus:
        try:
            instances = load_corpus(args.corpus)
        except (ValueError, json.JSONDecodeError) as exc:
            print(f"error: corpus parse failed: {exc}", file=sys.stderr)
            return 2
    elif args.count:
        instances = generate_corpus(args.seed, args.count)
    else:
        instances = _default_corpus()
    if not instances:
        print("warning: empty corpus, nothing verified", file=sys.stderr)
        return 0
    failures = []
    for i, inst in enumerate(instances):
        alpha = _ORACLE_ALPHAS[i % len(_ORACLE_ALPHAS)]
        try:
            result = exact_optimal_cvar(inst, alpha, budget=args.budget)
            pipeline = _pipeline_value(inst, alpha)
            gap = abs(pipeline - result.value)
            if gap > 1e-9:
                failures.append({"instance": i, "alpha": alpha,
                                 "error": f"pipeline gap {gap!r}"})
        except (OracleError, OracleSizeError) as exc:
            failures.append({"instance": i, "alpha": alpha, "error": str(exc)})
        if args.write_corpus is None:
            print(f"  instance {i}: alpha={alpha} "
                  f"{'FAIL' if failures and failures[-1]['instance'] == i else 'ok'}",
                  file=sys.stderr)
    if args.write_corpus:
        save_corpus(args.write_corpus, instances)
        print(f"corpus written to {args.write_corpus}", file=sys.stderr)
    report = {
        "schema_version": artifacts.SCHEMA_VERSION,
        "checked": len(instances),
        "failures": failures,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        artifacts.write_json(f"{args.out}/oracle_report.json", report)
    status = "PASS" if not failures else f"FAIL ({len(failures)} mismatches)"
    print(f"oracle: {len(instances)} instances checked in "
          f"{time.perf_counter() - t0:.2f}s: {status}", file=sys.stderr)
    return 0 if not failures else 1


def _pipeline_value(inst, alpha) -> float:
    model, grid = inst.to_model_and_grid()
    dsweep = sweep(model, grid)
    surface = risk_value(dsweep, alpha, model.g_lower)
    return float(surface.v_star[inst.x0])


def _default_corpus():
    from importlib import resources

    ref = resources.files("cvarsafe").joinpath("data/tiny_corpus.json")
    with resources.as_file(ref) as path:
        return load_corpus(path)


def cmd_compare_designs(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    os.makedirs(args.out, exist_ok=True)
    chash = config_mod.config_hash(cfg)
    counts = {}
    for design in ("a", "b", "c", "d"):
        dcfg = json.loads(json.dumps(cfg))  # deep copy
        dcfg["model"]["design"] = design
        dcfg["model"]["params"].pop("pump", None)
        model, grid, _ = _prepare(dcfg)
        config_mod.rs_within_range(dcfg, model)
        print(f"compare-designs: sweeping design {design}", file=sys.stderr)
        dsweep = sweep(model, grid, threads=cfg["threads"], progress=True)
        for alpha in cfg["alphas"]:
            surface = risk_value(dsweep, alpha, model.g_lower)
            for r in cfg["rs"]:
                counts[(design, alpha, r)] = extract_safe_set(surface, r).cell_count
    rows = []
    for design in ("a", "b", "c", "d"):
        for alpha in cfg["alphas"]:
            for r in cfg["rs"]:
                n = counts[(design, alpha, r)]
                base = counts[("a", alpha, r)]
                ratio = (n - base) / base if base else ""
                rows.append((design, alpha, r, n, ratio))
    with open(f"{args.out}/design_counts.csv", "w") as fh:
        fh.write(f"# config={chash}\n")
        fh.write("design,alpha,r,cells,ratio_vs_a\n")
        for design, alpha, r, n, ratio in rows:
            tail = artifacts.fmt(ratio) if ratio != "" else ""
            fh.write(f"{design},{_fmt_level(alpha)},{_fmt_level(r)},{n},{tail}\n")
    summary = {
        "schema_version": artifacts.SCHEMA_VERSION,
        "config_hash": chash,
        "alphas": [float(a) for a in cfg["alphas"]],
        "rs": [float(r) for r in cfg["rs"]],
        "cells": {f"{d},alpha={_fmt_level(a)},r={_fmt_level(r)}": counts[(d, a, r)]
                  for (d, a, r) in counts},
    }
    artifacts.write_json(f"{args.out}/compare_summary.json", summary)
    print(f"compare-designs finished in {time.perf_counter() - t0:.2f}s "
          f"-> {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvarsafe",
        description="Risk-sensitive safe sets via dual-parameter value iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("sweep", help="solve the dual-parameter sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("safe-sets", help="risk surfaces and safe-set masks")
    common(p)
    p.add_argument("--sweep", default=None, help="directory holding sweep.csv")
    p.add_argument("--alpha", default=None, help="comma-separated risk levels")
    p.add_argument("--r", default=None, help="comma-separated thresholds")
    p.set_defaults(func=cmd_safe_sets)

    p = sub.add_parser("deploy", help="synthesize a policy and roll it out")
    common(p)
    p.add_argument("--sweep", default=None, help="directory holding sweep.csv")
    p.add_argument("--x0", default=None, help="initial state, e.g. 2.5,3.0")
    p.add_argument("--alpha", dest="deploy_alpha", type=float, default=None)
    p.add_argument("--rollouts", type=int, default=None)
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("oracle", help="run the tiny-instance verification corpus")
    p.add_argument("--corpus", default=None, help="corpus JSON (default: shipped)")
    p.add_argument("--out", default=None)
    p.add_argument("--count", type=int, default=None,
                   help="generate this many instances instead of loading")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=1_000_000)
    p.add_argument("--write-corpus", default=None,
                   help="serialize the checked instances to this path")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare-designs",
                       help="safe-set cell counts across designs a-d")
    common(p)
    p.add_argument("--alpha", default=None)
    p.add_argument("--r", default=None)
    p.set_defaults(func=cmd_compare_designs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
