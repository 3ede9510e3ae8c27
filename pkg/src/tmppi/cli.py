"""The ``tmppi`` command line front end.

Subcommands: ``collect``, ``train``, ``run``, ``sweep``, ``report``,
``model inspect`` and ``dataset export``.  Every subcommand accepts
``--config FILE`` (flat TOML key/value pairs, same keys as the flags),
``--seed``, ``--out`` and ``--threads``; flags override config values.
Exit codes: 0 on success, 2 for usage/config errors, 1 otherwise.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import dataset as ds
from . import harness, report
from .transformer import TrainConfig, model_summary, save_model, train_model
from .transformer.model import TransformerConfig

USAGE_ERROR = 2

DESK_MODEL = dict(d_model=32, num_layers=2, num_heads=4, d_ff=128, dropout=0.1)


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}", USAGE_ERROR)


_TUPLE_KEYS = {"controllers", "samples", "noise_std", "obstacle_speed"}


def experiment_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    """Defaults for the chosen environment, overlaid with config file values,
    overlaid with explicit flags."""
    config = _load_config(args.config)
    known = {f.name for f in fields(harness.ExperimentConfig)}
    unknown = set(config) - known - {"train"}
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}", USAGE_ERROR)
    merged = {k: v for k, v in config.items() if k in known}
    env_choice = getattr(args, "environment", None) or merged.get("environment", "navigation")
    if getattr(args, "full_scale", False) and env_choice == "racing":
        # published-scale racing geometry and sample counts; explicit config
        # keys and flags still win
        merged = {**harness.RACING_FULL_SCALE, **merged}
    for key in (
        "environment", "controllers", "samples", "episodes", "model_path", "threads",
        "horizon", "temperature", "noise_std", "num_obstacles", "dynamic_obstacles",
        "max_steps",
    ):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            merged[key] = value
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.threads is not None:
        merged["threads"] = args.threads
    environment = merged.pop("environment", "navigation")
    for key in _TUPLE_KEYS & set(merged):
        merged[key] = tuple(merged[key])
    try:
        return harness.ExperimentConfig.for_environment(environment, **merged)
    except (ValueError, TypeError) as exc:
        raise CliError(str(exc), USAGE_ERROR)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_collect(args: argparse.Namespace) -> int:
    cfg = experiment_config(args)
    out = _out_dir(args)

    def progress(done, attempted):
        if done % 25 == 0:
            print(f"  collected {done} episodes ({attempted} attempted)")

    data, stats = harness.collect_episodes(
        cfg,
        num_episodes=args.num_episodes,
        num_samples=args.collect_samples,
        include_failed=args.include_failed,
        progress=progress,
    )
    path = out / args.dataset
    ds.save_dataset(path, data)
    print(f"wrote {len(data.episodes)} episodes to {path}")
    print(f"outcomes: {stats}")
    return 0


def _train_config(args: argparse.Namespace, config: dict) -> TrainConfig:
    section = dict(config.get("train", {}))
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(section) - known - {"window_stride", "model"}
    if unknown:
        raise CliError(f"unknown train config keys: {sorted(unknown)}", USAGE_ERROR)
    section = {k: v for k, v in section.items() if k in known}
    if args.epochs is not None:
        section["max_epochs"] = args.epochs
    if args.seed is not None:
        section["seed"] = args.seed
    return TrainConfig(**section)


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = _out_dir(args)
    data = ds.load_dataset(args.dataset)
    if not data.episodes:
        raise CliError("dataset holds no episodes")
    train_cfg = _train_config(args, config)

    model_keys = dict(config.get("train", {}).get("model", {}))
    if args.full_scale:
        model_keys = {}
    arch = dict(DESK_MODEL if not args.full_scale else {})
    arch.update(model_keys)
    stride = int(config.get("train", {}).get("window_stride", args.window_stride))

    normalizer = ds.Normalizer.fit(data.episodes)
    train_eps, val_eps = ds.split_episodes(data.episodes, ratio=0.9, seed=train_cfg.seed)
    windows_train, windows_val = [], []
    for bucket, episodes in ((windows_train, train_eps), (windows_val, val_eps)):
        for index, episode in enumerate(episodes):
            bucket.extend(ds.window(episode, k=data.k_past, horizon=data.horizon, episode_index=index)[::stride])
    if not windows_train or not windows_val:
        raise CliError("not enough windows to train; collect more episodes")
    print(f"training on {len(windows_train)} windows, validating on {len(windows_val)}")

    model_cfg = TransformerConfig(
        state_dim=data.state_dim,
        control_dim=data.control_dim,
        context_dim=data.context_dim,
        k_past=data.k_past,
        horizon=data.horizon,
        **arch,
    )
    train_arrays = ds.windows_to_arrays(windows_train, normalizer)
    val_arrays = ds.windows_to_arrays(windows_val, normalizer)

    def progress(epoch, train_loss, val_loss):
        print(f"  epoch {epoch}: train {train_loss:.5f}  val {val_loss:.5f}")

    params, history = train_model(
        model_cfg, train_arrays, val_arrays, train_cfg, progress=progress
    )
    model_path = out / args.model
    save_model(model_path, model_cfg, params, extras=normalizer.as_arrays())
    history_path = out / "training_log.csv"
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, tl, vl in zip(history.epochs, history.train_loss, history.val_loss):
            fh.write(f"{epoch},{tl:.6g},{vl:.6g}\n")
    print(
        f"best validation loss {history.best_val:.5f} at epoch {history.best_epoch};"
        f" wrote {model_path} and {history_path}"
    )
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = experiment_config(args)
    out = _out_dir(args)
    controller = args.controller
    if controller == harness.WARM_START and cfg.model_path is None:
        raise CliError("transformer-mppi requires model_path (config) or --model-path")
    if cfg.model_path is not None and not Path(cfg.model_path).exists():
        raise CliError(f"model file not found: {cfg.model_path}")
    num_samples = args.run_samples or cfg.samples[0]
    metrics, log = harness.run_episode(
        cfg, cfg.seed, num_samples, controller, record=True
    )
    trajectory = harness.write_trajectory_csv(log, out / "trajectory.csv")
    print(
        f"outcome={metrics.outcome.value} steps={metrics.steps}"
        f" cost={metrics.total_cost:.6g} step_ms={metrics.step_ms:.3g}"
    )
    print(f"wrote {trajectory}")
    if args.plot:
        png = report.render_trajectory(trajectory, out / "trajectory.png")
        print(f"wrote {png}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = experiment_config(args)
    if harness.WARM_START in cfg.controllers:
        if cfg.model_path is None:
            raise CliError("sweep includes transformer-mppi but no model_path is set")
        if not Path(cfg.model_path).exists():
            raise CliError(f"model file not found: {cfg.model_path}")
    out = _out_dir(args)

    def progress(done, total, last):
        print(
            f"  [{done}/{total}] {last.controller} K={last.samples}"
            f" episode {last.episode}: {last.outcome.value} cost={last.total_cost:.6g}"
        )

    result = harness.sweep(cfg, progress=progress if args.verbose else None)
    aggregate, episodes = harness.write_sweep_csvs(result, out, timing_in_csv=args.timing)
    print(f"wrote {aggregate} and {episodes}")
    if args.plots:
        for path in report.render_sweep_figures(out):
            print(f"wrote {path}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    out = _out_dir(args)
    if not (out / "episodes.csv").exists():
        raise CliError(f"no episodes.csv under {out}; run a sweep first")
    for path in report.render_sweep_figures(out):
        print(f"wrote {path}")
    trajectory = out / "trajectory.csv"
    if trajectory.exists():
        print(f"wrote {report.render_trajectory(trajectory, out / 'trajectory.png')}")
    history = out / "training_log.csv"
    if history.exists():
        print(f"wrote {report.render_training_curve(history, out / 'training_curve.png')}")
    return 0


def cmd_model_inspect(args: argparse.Namespace) -> int:
    print(model_summary(args.model_file))
    return 0


def cmd_dataset_export(args: argparse.Namespace) -> int:
    data = ds.load_dataset(args.dataset_file)
    ds.export_csv(data, args.csv_file)
    print(f"wrote {args.csv_file} ({sum(e.length for e in data.episodes)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed")
    common.add_argument("--config", default=None, help="TOML config file")
    common.add_argument("--out", default=None, help="output directory (default ./out)")
    common.add_argument("--threads", type=int, default=None, help="worker processes")

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument("--environment", choices=["navigation", "racing"], default=None)
    experiment.add_argument("--model-path", dest="model_path", default=None)
    experiment.add_argument("--episodes", type=int, default=None)
    experiment.add_argument("--horizon", type=int, default=None)
    experiment.add_argument("--temperature", type=float, default=None)
    experiment.add_argument("--num-obstacles", dest="num_obstacles", type=int, default=None)
    experiment.add_argument(
        "--dynamic-obstacles", dest="dynamic_obstacles", type=int, default=None
    )
    experiment.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    experiment.add_argument(
        "--samples", type=lambda s: tuple(int(x) for x in s.split(",")), default=None,
        help="comma-separated sample counts",
    )
    experiment.add_argument(
        "--controllers", type=lambda s: tuple(s.split(",")), default=None,
        help="comma-separated controller names",
    )
    experiment.add_argument(
        "--full-scale", action="store_true",
        help="racing only: published track length, step budget, obstacle count "
             "and sample counts instead of the reduced preset",
    )

    parser = argparse.ArgumentParser(prog="tmppi", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p_collect = sub.add_parser("collect", parents=[common, experiment],
                               help="run the baseline to build a training dataset")
    p_collect.add_argument("--num-episodes", type=int, default=200)
    p_collect.add_argument("--collect-samples", type=int, default=256,
                           help="solver samples used during collection")
    p_collect.add_argument("--include-failed", action="store_true")
    p_collect.add_argument("--dataset", default="dataset.bin", help="output file name")
    p_collect.set_defaults(fn=cmd_collect)

    p_train = sub.add_parser("train", parents=[common],
                             help="train the warm-start model on a dataset")
    p_train.add_argument("dataset")
    p_train.add_argument("--model", default="model.bin", help="output file name")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--window-stride", type=int, default=2,
                         help="keep every n-th window (desk-scale thinning)")
    p_train.add_argument("--full-scale", action="store_true",
                         help="use the published architecture instead of the desk preset")
    p_train.set_defaults(fn=cmd_train)

    p_run = sub.add_parser("run", parents=[common, experiment], help="run one episode")
    p_run.add_argument("--controller", choices=[harness.BASELINE, harness.WARM_START],
                       default=harness.BASELINE)
    p_run.add_argument("--run-samples", type=int, default=None)
    p_run.add_argument("--plot", action="store_true", help="render the trajectory PNG")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", parents=[common, experiment],
                             help="full metric sweep -> aggregate.csv / episodes.csv")
    p_sweep.add_argument("--plots", action="store_true", help="render figures as well")
    p_sweep.add_argument("--timing", action="store_true",
                         help="put wall-clock step times into aggregate.csv "
                              "(costs byte-reproducibility; timings.csv always has them)")
    p_sweep.add_argument("--verbose", action="store_true")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_report = sub.add_parser("report", parents=[common],
                              help="render figures from the CSVs in --out")
    p_report.set_defaults(fn=cmd_report)

    p_model = sub.add_parser("model", help="model file utilities")
    model_sub = p_model.add_subparsers(dest="model_command")
    p_inspect = model_sub.add_parser("inspect", parents=[common])
    p_inspect.add_argument("model_file")
    p_inspect.set_defaults(fn=cmd_model_inspect)

    p_dataset = sub.add_parser("dataset", help="dataset file utilities")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command")
    p_export = dataset_sub.add_parser("export", parents=[common])
    p_export.add_argument("dataset_file")
    p_export.add_argument("csv_file")
    p_export.set_defaults(fn=cmd_dataset_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "fn"):
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"tmppi: {exc}", file=sys.stderr)
        return exc.code
    except (ds.DatasetFormatError, FileNotFoundError, ValueError) as exc:
        print(f"tmppi: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
