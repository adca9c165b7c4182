"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, report. Environment variables
SCENEMOTION_SEED and SCENEMOTION_OUT override the corresponding flags
wherever a seed or output directory is taken. Exit codes: 0 on success,
1 with a diagnostic on stderr for runtime errors, 2 for bad flags.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from pathlib import Path

SEED_ENV = "SCENEMOTION_SEED"
OUT_ENV = "SCENEMOTION_OUT"

EVAL_CSV_COLUMNS = ["episode_id", "traj_path_mm", "traj_dest_mm",
                    "mpjpe_path_mm", "mpjpe_dest_mm"]


def _resolve_seed(flag_value: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return flag_value
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _resolve_out(flag_value: str | None) -> Path:
    raw = os.environ.get(OUT_ENV)
    if raw is not None:
        return Path(raw)
    if flag_value is None:
        raise ValueError(f"no output directory: pass --out or set {OUT_ENV}")
    return Path(flag_value)


def _write_metric_csv(report, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EVAL_CSV_COLUMNS)
        for episode in report.episodes:
            writer.writerow([
                episode.episode_id,
                f"{episode.traj_path:.6f}",
                f"{episode.traj_dest:.6f}",
                f"{episode.mpjpe_path:.6f}",
                f"{episode.mpjpe_dest:.6f}",
            ])


def _write_metric_json(report, path: Path, extra: dict | None = None) -> None:
    payload = report.as_dict()
    if extra:
        payload.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _train_config_from_args(args) -> "TrainConfig":
    from .training import TrainConfig

    if args.config is not None:
        config = TrainConfig.from_json(Path(args.config).read_text())
    else:
        config = TrainConfig(
            model_preset=args.preset,
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.learning_rate,
            seed=args.seed,
            checkpoint_every=args.checkpoint_every,
            aggregator=args.aggregator,
            scene_encoder=args.scene_encoder,
            use_scene=not args.no_scene,
            use_gaze=not args.no_gaze,
            use_tia=not args.no_tia,
            use_sca=not args.no_sca,
            use_decoder=not args.no_decoder,
            use_discriminator=not args.no_discriminator,
        )
    seed = _resolve_seed(config.seed)
    if seed != config.seed:
        config = dataclasses.replace(config, seed=seed)
    return config


def _cmd_gen_data(args) -> int:
    from .synthworld.dataset import generate_dataset

    out = _resolve_out(args.out)
    seed = _resolve_seed(args.seed)
    manifest = generate_dataset(out, scenes=args.scenes,
                                episodes_per_scene=args.episodes, seed=seed,
                                target_points=args.points)
    digest = hashlib.sha256(manifest.read_bytes()).hexdigest()
    print(f"wrote {manifest}")
    print(f"manifest sha256 {digest}")
    return 0


def _cmd_train(args) -> int:
    from .synthworld.dataset import read_dataset
    from .training import run_training

    config = _train_config_from_args(args)
    out = _resolve_out(args.out)
    dataset = read_dataset(args.data)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json() + "\n")
    result = run_training(config, dataset, out_dir=out)
    if result.history:
        last = result.history[-1]
        print(f"epoch {config.epochs}: total={last.total:.6f} "
              f"l_traj={last.l_traj:.6f} l_joints={last.l_joints:.6f}")
    for path in result.checkpoints:
        print(f"checkpoint {path}")
    return 0


def _load_for_eval(args):
    from .synthworld.dataset import read_dataset
    from .training import model_config_for, prepare_dataset, restore_model

    model, config, epoch = restore_model(Path(args.checkpoint))
    dataset = read_dataset(args.data)
    prepared = prepare_dataset(dataset, model_config_for(config))
    return model, config, epoch, dataset, prepared


def _cmd_eval(args) -> int:
    from .training import evaluate

    model, config, epoch, _, prepared = _load_for_eval(args)
    report = evaluate(model, prepared, split=args.split,
                      batch_size=config.batch_size)
    out = _resolve_out(args.out)
    _write_metric_csv(report, out / "metrics.csv")
    _write_metric_json(report, out / "metrics.json",
                       {"split": args.split, "epoch": epoch,
                        "seed": config.seed})
    print(f"traj_path={report.traj_path:.3f} traj_dest={report.traj_dest:.3f} "
          f"mpjpe_path={report.mpjpe_path:.3f} "
          f"mpjpe_dest={report.mpjpe_dest:.3f} (mm, split={args.split})")
    print(f"wrote {out / 'metrics.csv'}")
    print(f"wrote {out / 'metrics.json'}")
    return 0


def _cmd_ablate(args) -> int:
    from .ablation import (run_ablation, run_size_sweep, write_rows_csv,
                           write_rows_json)
    from .synthworld.dataset import read_dataset
    from .training import TrainConfig

    dataset = read_dataset(args.data)
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]
    if not seeds:
        raise ValueError("no seeds given")
    base = TrainConfig(model_preset=args.preset, epochs=args.epochs,
                       batch_size=args.batch_size, seed=seeds[0])
    out = _resolve_out(args.out)

    def progress(row):
        print(f"{row.variant} seed={row.seed}: "
              f"traj_dest={row.report.traj_dest:.3f} "
              f"mpjpe_dest={row.report.mpjpe_dest:.3f}")

    if args.grid == "table4":
        rows = run_size_sweep(base, dataset, seeds=seeds, progress=progress)
    else:
        rows = run_ablation(base, dataset, args.grid, seeds=seeds,
                            progress=progress)
    csv_path = out / f"ablation_{args.grid}.csv"
    json_path = out / f"ablation_{args.grid}.json"
    write_rows_csv(rows, csv_path)
    write_rows_json(rows, json_path)
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def _cmd_report(args) -> int:
    from .plots import render_report_figures
    from .training import evaluate, predict_bundles

    model, config, epoch, dataset, prepared = _load_for_eval(args)
    report = evaluate(model, prepared, split=args.split,
                      batch_size=config.batch_size)
    out = _resolve_out(args.out)
    _write_metric_csv(report, out / "metrics.csv")
    _write_metric_json(report, out / "metrics.json",
                       {"split": args.split, "epoch": epoch,
                        "seed": config.seed})
    indices = prepared.indices_for(args.split)
    if args.episode is not None:
        matches = [i for i in indices
                   if prepared.episode_ids[i] == args.episode]
        if not matches:
            raise ValueError(
                f"episode {args.episode!r} not in split {args.split!r}")
        target = matches[0]
    else:
        target = indices[0]
    bundle = predict_bundles(model, prepared, [target],
                             batch_size=config.batch_size)[0]
    record = prepared.records[target]
    cloud = dataset.scenes[record.scene_id].cloud
    figures = render_report_figures(bundle, record, cloud, out,
                                    prefix=prepared.episode_ids[target])
    print(f"wrote {out / 'metrics.csv'}")
    print(f"wrote {out / 'metrics.json'}")
    for path in figures:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenemotion",
        description="Scene- and gaze-conditioned motion forecasting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--scenes", type=int, default=8)
    p.add_argument("--episodes", type=int, default=50,
                   help="episodes per scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=4096,
                   help="points per scene cloud")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", default=None, help="run directory")
    p.add_argument("--config", default=None,
                   help="JSON train config (overrides other model flags)")
    p.add_argument("--preset", default="default",
                   choices=("default", "small", "tiny"))
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=4e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=25)
    p.add_argument("--aggregator", default="last",
                   choices=("last", "mean", "max", "conv", "transformer"))
    p.add_argument("--scene-encoder", default="hierarchical",
                   choices=("hierarchical", "pointwise"))
    for toggle in ("scene", "gaze", "tia", "sca", "decoder", "discriminator"):
        p.add_argument(f"--no-{toggle}", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--split", default="eval", choices=("train", "eval"))
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation grid")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--grid", required=True,
                   choices=("table1", "table3", "table4", "table5"))
    p.add_argument("--preset", default="small",
                   choices=("default", "small", "tiny"))
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seeds", default="0", help="comma-separated seed list")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("report", help="metrics plus figures for one episode")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--split", default="eval", choices=("train", "eval"))
    p.add_argument("--episode", default=None, help="episode id to render")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
