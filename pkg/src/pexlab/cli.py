"""Command-line interface.

Subcommands: gen-data, train-offline, train-online, eval, plot. Training
commands take a JSON config file plus repeatable --set key=value overrides
(dotted paths reach into the strategy block). Exit codes: 0 success,
2 configuration error, 3 data/file error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, replay
from .envs import ENV_IDS, BehaviorGrade, generate_offline_dataset, make_env, normalized_score
from .errors import ConfigError, DataError, PexlabError
from .harness import RunConfig, RunLog


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pexlab")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate an offline dataset file")
    gen.add_argument("--env", required=True, choices=ENV_IDS)
    gen.add_argument("--grade", required=True,
                     choices=[g.name.lower().replace("_", "-") for g in BehaviorGrade])
    gen.add_argument("--transitions", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    for name in ("train-offline", "train-online"):
        cmd = sub.add_parser(name, help=f"run the {name.split('-')[1]} phase")
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--set", action="append", default=[], dest="overrides",
                         metavar="KEY=VALUE", help="override a config entry")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out-dir", required=True)
        if name == "train-online":
            cmd.add_argument("--checkpoint", default=None,
                             help="offline checkpoint (.pexc); required by transfer strategies")

    ev = sub.add_parser("eval", help="evaluate a checkpoint's greedy policy")
    ev.add_argument("--env", required=True, choices=ENV_IDS)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--seed", type=int, default=0)

    plot = sub.add_parser("plot", help="render CSVs and figures from run logs")
    plot.add_argument("logs", nargs="+", help="runlog.json files")
    plot.add_argument("--out-dir", required=True)
    plot.add_argument("--usage-bucket", type=int, default=1000)
    return parser


def load_config(args) -> RunConfig:
    path = Path(args.config)
    if not path.exists():
        raise DataError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    harness.apply_overrides(data, args.overrides)
    config = RunConfig.from_dict(data)
    if args.seed is not None:
        config.seed = args.seed
    return config.resolved()


def cmd_gen_data(args) -> None:
    env = make_env(args.env)
    grade = BehaviorGrade[args.grade.upper().replace("-", "_")]
    rng = np.random.default_rng(args.seed)
    transitions = generate_offline_dataset(env, grade, args.transitions, rng)
    dataset = replay.OfflineDataset.from_transitions(transitions, args.env, grade, args.seed)
    replay.save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} transitions to {args.out} "
          f"(mean episode return {dataset.mean_episode_return():.3f})")


def cmd_train_offline(args) -> None:
    config = load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = harness.run_offline_phase(config)
    ckpt = out_dir / "checkpoint.pexc"
    harness.save_run_checkpoint(ckpt, result.nets, result.config)
    result.log.save(out_dir / "runlog.json")
    harness.emit_outputs([result.log], out_dir)
    final = result.log.eval_records[-1]
    print(f"offline phase done: {config.offline_steps} steps, "
          f"final score {final.normalized_score:.1f} ({ckpt})")


def cmd_train_online(args) -> None:
    config = load_config(args)
    checkpoint = None
    if args.checkpoint is not None:
        checkpoint = harness.load_run_checkpoint(args.checkpoint)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = harness.run_online_phase(config, checkpoint)
    result.log.save(out_dir / "runlog.json")
    harness.emit_outputs([result.log], out_dir)
    final = result.log.eval_records[-1]
    print(f"online phase done: {config.online_steps} steps, "
          f"final score {final.normalized_score:.1f}")


def cmd_eval(args) -> None:
    env = make_env(args.env)
    networks = harness.load_run_checkpoint(args.checkpoint)
    actor = harness.checkpoint_actor(networks, env.spec)
    rng = np.random.default_rng(args.seed)
    mean, returns = harness.evaluate(actor, env, args.episodes, rng)
    print(f"mean return {mean:.3f} over {args.episodes} episodes "
          f"(normalized {normalized_score(env.spec, mean):.1f})")
    print("episode returns:", " ".join(f"{r:.3f}" for r in returns))


def cmd_plot(args) -> None:
    logs = [RunLog.load(p) for p in args.logs]
    written = harness.emit_outputs(logs, args.out_dir, usage_bucket=args.usage_bucket)
    for path in written:
        print(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train-offline": cmd_train_offline,
        "train-online": cmd_train_online,
        "eval": cmd_eval,
        "plot": cmd_plot,
    }
    try:
        handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except PexlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
