"""Command-line front end.

Verbs: ``train`` (train + evaluate per seed), ``evaluate`` (re-evaluate a
finished run, optionally under a modified view protocol), ``compare``
(several methods on one environment, normalized table), and
``attention-report`` (per-view attention summary of a fused run).

Precedence: built-in defaults, then command-line flags, then the config
file; values from ``--config`` override flags. The output root comes from
``--out`` or the ``MVRL_OUT`` environment variable, default ``./runs``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .harness import (ExperimentConfig, attention_report, compare,
                      evaluate_policy, load_model, output_root, run)

_FLAG_FIELDS = {
    "method": str,
    "iterations": int,
    "episodes_per_iteration": int,
    "gamma": float,
    "gamma_r": float,
    "eps_min": float,
    "eps_max": float,
    "eval_episodes": int,
    "max_env_steps": int,
    "adaptation_steps": int,
    "checkpoint_every": int,
    "view_index": int,
}

_ENV_FLAGS = {
    "n_views": int,
    "view_dim": int,
    "diversity": float,
    "sigma2": float,
    "max_steps": int,
    "views_seed": int,
}


def _add_config_flags(parser):
    for name, typ in _FLAG_FIELDS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    for name, typ in _ENV_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    parser.add_argument("--seeds", type=str, default=None,
                        help="comma-separated master seeds")
    parser.add_argument("--perturb", type=str, default=None, metavar="VIEW:SIGMA2",
                        help="raise one view's noise variance at test time")
    parser.add_argument("--irrelevant", type=str, default=None, metavar="I,J",
                        help="make these views irrelevant at test time")
    parser.add_argument("--env-file", type=str, default=None,
                        help="JSON environment config file")
    parser.add_argument("-c", "--config", type=str, default=None,
                        help="JSON experiment config; overrides flags")


def _build_config(args):
    data = {}
    for name in _FLAG_FIELDS:
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    env_cfg = {}
    if args.env_file:
        with open(args.env_file) as fh:
            env_cfg.update(json.load(fh))
    for name in _ENV_FLAGS:
        value = getattr(args, name)
        if value is not None:
            env_cfg[name] = value
    if env_cfg:
        data["env"] = env_cfg
    if args.seeds is not None:
        data["seeds"] = [int(s) for s in args.seeds.split(",") if s]
    if args.perturb is not None:
        view, sigma2 = args.perturb.split(":")
        data["perturb_view"] = [int(view), float(sigma2)]
    if args.irrelevant is not None:
        data["irrelevant_views"] = [int(i) for i in args.irrelevant.split(",") if i]
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        env_from_file = file_cfg.pop("env", None)
        data.update(file_cfg)
        if env_from_file is not None:
            merged = dict(data.get("env", {}))
            merged.update(env_from_file)
            data["env"] = merged
    return ExperimentConfig.from_dict(data).validate()


def _cmd_train(args):
    cfg = _build_config(args)
    out = os.path.join(output_root(args.out), cfg.method)
    records = run(cfg, out, jobs=args.jobs)
    for rec in records:
        ev = rec.summary["eval"]
        print(f"{rec.method} seed {rec.seed}: return {ev['return_mean']:.3f} "
              f"+- {ev['return_std']:.3f}, time {ev['time_mean']:.2f} s, "
              f"distance {ev['distance_mean']:.2f} m -> {rec.run_dir}")
    return 0


def _cmd_evaluate(args):
    cfg, seed, model = load_model(args.run_dir)
    env = cfg.build_env()
    if args.perturb is not None:
        view, sigma2 = args.perturb.split(":")
        env.perturb_view(int(view), float(sigma2))
    elif cfg.perturb_view is not None:
        env.perturb_view(int(cfg.perturb_view[0]), float(cfg.perturb_view[1]))
    if args.irrelevant is not None:
        env.make_irrelevant([int(i) for i in args.irrelevant.split(",") if i])
    elif cfg.irrelevant_views:
        env.make_irrelevant(list(cfg.irrelevant_views))
    episodes = args.episodes or cfg.eval_episodes
    rows = evaluate_policy(env, model.act, episodes, args.seed if args.seed is not None else seed)
    rets = [r["return"] for r in rows]
    times = [r["time_sec"] for r in rows]
    dists = [r["distance_m"] for r in rows]
    print(f"{cfg.method}: {episodes} episodes, return {np.mean(rets):.3f} "
          f"+- {np.std(rets):.3f}, time {np.mean(times):.2f} s, "
          f"distance {np.mean(dists):.2f} m")
    return 0


def _cmd_compare(args):
    configs = []
    for path in args.configs:
        with open(path) as fh:
            configs.append(ExperimentConfig.from_dict(json.load(fh)).validate())
    out = os.path.join(output_root(args.out), "comparison")
    result = compare(configs, out, jobs=args.jobs)
    print("method,time_mean,time_std,distance_mean,distance_std")
    for row in result["table"]:
        print(f"{row['method']},{row['time_mean']:.4f},{row['time_std']:.4f},"
              f"{row['distance_mean']:.4f},{row['distance_std']:.4f}")
    print(f"written to {out}")
    return 0


def _cmd_attention_report(args):
    report = attention_report(args.run_dir)
    n = len(report["view_means"])
    print(f"attention over {report['n_steps']} evaluation steps")
    for i, (m, s) in enumerate(zip(report["view_means"], report["view_stds"])):
        flag = "  (below uniform)" if i in report["below_uniform"] else ""
        print(f"  view {i}: mean {m:.4f} +- {s:.4f}{flag}")
    print(f"uniform weight would be {1.0 / n:.4f}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="mvrl",
        description="Multi-view actor-critic RL experiments",
        epilog="Values loaded via --config override command-line flags.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train and evaluate one method")
    _add_config_flags(p_train)
    p_train.add_argument("--out", type=str, default=None)
    p_train.add_argument("--jobs", type=int, default=1)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("evaluate", help="re-evaluate a finished run")
    p_eval.add_argument("run_dir")
    p_eval.add_argument("--episodes", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--perturb", type=str, default=None, metavar="VIEW:SIGMA2")
    p_eval.add_argument("--irrelevant", type=str, default=None, metavar="I,J")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="compare several configs on one env")
    p_cmp.add_argument("configs", nargs="+", help="experiment config JSON files")
    p_cmp.add_argument("--out", type=str, default=None)
    p_cmp.add_argument("--jobs", type=int, default=1)
    p_cmp.set_defaults(func=_cmd_compare)

    p_att = sub.add_parser("attention-report", help="per-view attention summary")
    p_att.add_argument("run_dir")
    p_att.set_defaults(func=_cmd_attention_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
