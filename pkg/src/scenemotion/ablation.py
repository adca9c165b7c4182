"""Ablation harness: modality, component, cloud-size, aggregator sweeps.

Every grid trains each variant from the same seed with identical data,
evaluates on the held-out split, and emits one row per (variant, seed).
Rows carry the four path/dest metrics in millimeters.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import MetricReport
from .synthworld.dataset import Dataset, SceneEntry
from .synthworld.scenes import generate_scene
from .tia import AGGREGATOR_CHOICES
from .training import (TrainConfig, evaluate, model_config_for,
                       prepare_dataset, run_training)

VARIANT_OVERRIDES: dict[str, dict] = {
    "full": {},
    "motion_only": {"use_scene": False, "use_gaze": False},
    "scene_only": {"use_gaze": False},
    "gaze_only": {"use_scene": False},
    "no_tia": {"use_tia": False},
    "no_sca": {"use_sca": False},
    "no_decoder": {"use_decoder": False},
    "no_discriminator": {"use_discriminator": False, "weight_adv": 0.0},
    "mlp_encoder": {"scene_encoder": "pointwise"},
}
VARIANT_OVERRIDES.update(
    {f"agg_{name}": {"aggregator": name} for name in AGGREGATOR_CHOICES})

GRIDS: dict[str, list[str]] = {
    "table1": ["motion_only", "scene_only", "gaze_only", "full"],
    "table3": ["no_tia", "no_sca", "no_decoder", "no_discriminator",
               "mlp_encoder", "full"],
    "table5": [f"agg_{name}" for name in AGGREGATOR_CHOICES],
}

CSV_COLUMNS = ["variant", "traj_path_mm", "traj_dest_mm", "mpjpe_path_mm",
               "mpjpe_dest_mm", "seed", "epochs"]


@dataclass(frozen=True)
class AblationRow:
    variant: str
    report: MetricReport
    seed: int
    epochs: int

    def csv_values(self) -> list[str]:
        return [
            self.variant,
            f"{self.report.traj_path:.6f}",
            f"{self.report.traj_dest:.6f}",
            f"{self.report.mpjpe_path:.6f}",
            f"{self.report.mpjpe_dest:.6f}",
            str(self.seed),
            str(self.epochs),
        ]


def variant_config(base: TrainConfig, variant: str,
                   seed: int | None = None) -> TrainConfig:
    if variant not in VARIANT_OVERRIDES:
        raise ValueError(f"unknown ablation variant {variant!r}")
    overrides = dict(VARIANT_OVERRIDES[variant])
    if seed is not None:
        overrides["seed"] = seed
    return replace(base, **overrides)


def resolve_grid(grid: str | Sequence[str]) -> list[str]:
    if isinstance(grid, str):
        if grid not in GRIDS:
            raise ValueError(f"unknown grid {grid!r}; have {sorted(GRIDS)}")
        return list(GRIDS[grid])
    names = list(grid)
    for name in names:
        if name not in VARIANT_OVERRIDES:
            raise ValueError(f"unknown ablation variant {name!r}")
    return names


def run_ablation(base_config: TrainConfig, dataset: Dataset,
                 grid: str | Sequence[str],
                 seeds: Sequence[int] = (0,),
                 progress=None) -> list[AblationRow]:
    """Train and evaluate every (variant, seed) pair of a grid.

    The prepared tensors are shared across variants with the same model
    geometry; variants only differ in toggles, so one preparation per
    distinct model config suffices.
    """
    names = resolve_grid(grid)
    rows: list[AblationRow] = []
    prepared_cache: dict = {}
    for name in names:
        for seed in seeds:
            config = variant_config(base_config, name, seed=seed)
            model_config = model_config_for(config)
            key = model_config.scene_spec
            if key not in prepared_cache:
                prepared_cache[key] = prepare_dataset(dataset, model_config)
            prepared = prepared_cache[key]
            result = run_training(config, dataset, prepared=prepared)
            report = evaluate(result.model, prepared,
                              batch_size=config.batch_size)
            rows.append(AblationRow(variant=name, report=report, seed=seed,
                                    epochs=config.epochs))
            if progress is not None:
                progress(rows[-1])
    return rows


def resample_dataset(dataset: Dataset, target_points: int) -> Dataset:
    """Same scenes and episodes with clouds resampled to a new size."""
    scenes = {}
    for sid, entry in dataset.scenes.items():
        spec = replace(entry.spec, target_points=target_points)
        cloud, _ = generate_scene(spec, entry.seed)
        scenes[sid] = SceneEntry(scene_id=sid, cloud=cloud, spec=spec,
                                 seed=entry.seed)
    return Dataset(seed=dataset.seed, horizon=dataset.horizon, scenes=scenes,
                   episodes=dataset.episodes, root=None)


def run_size_sweep(base_config: TrainConfig, dataset: Dataset,
                   sizes: Sequence[int] = (512, 1024, 2048, 4096),
                   seeds: Sequence[int] = (0,),
                   progress=None) -> list[AblationRow]:
    """Cloud-size sweep: trains the full model per point-cloud size."""
    rows: list[AblationRow] = []
    for size in sizes:
        if size < 1:
            raise ValueError("cloud size must be positive")
        resampled = resample_dataset(dataset, size)
        for seed in seeds:
            config = variant_config(base_config, "full", seed=seed)
            prepared = prepare_dataset(resampled, model_config_for(config))
            result = run_training(config, resampled, prepared=prepared)
            report = evaluate(result.model, prepared,
                              batch_size=config.batch_size)
            rows.append(AblationRow(variant=f"points_{size}", report=report,
                                    seed=seed, epochs=config.epochs))
            if progress is not None:
                progress(rows[-1])
    return rows


def write_rows_csv(rows: Sequence[AblationRow], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_values())


def write_rows_json(rows: Sequence[AblationRow], path: Path) -> None:
    payload = [
        {
            "variant": row.variant,
            "seed": row.seed,
            "epochs": row.epochs,
            **row.report.as_dict(),
        }
        for row in rows
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def median_metric(rows: Sequence[AblationRow], variant: str,
                  metric: str) -> float:
    values = [getattr(row.report, metric) for row in rows
              if row.variant == variant]
    if not values:
        raise ValueError(f"no rows for variant {variant!r}")
    return float(np.median(values))
