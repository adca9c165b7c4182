"""Dataset directory layout, binary array container, and ingestion.

A dataset is a directory of per-scene cloud files and per-episode record
files plus a manifest listing everything with content hashes. Files use a
small self-describing container: magic, a JSON header with array names,
dtypes and shapes, then raw little-endian C-order array bytes. The format
is byte-deterministic, so identical generation inputs produce identical
files and hashes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core.types import (GazeSequence, HorizonConfig, MotionSequence,
                          ScenePointCloud, sequence_from_arrays)
from .episodes import EpisodeRecord, generate_episode
from .scenes import (SceneSpec, benchmark_scene_specs, generate_scene,
                     spec_from_dict, spec_to_dict)

MAGIC = b"SMDB"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


class CorruptDatasetError(RuntimeError):
    """A dataset file failed structural or hash validation."""


def _canonical_json(data) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode()


def write_blob(path: Path, arrays: dict[str, np.ndarray], meta: dict) -> str:
    """Write the container and return its sha256 hex digest."""
    header = {
        "version": FORMAT_VERSION,
        "meta": meta,
        "arrays": [
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)}
            for name, arr in arrays.items()
        ],
    }
    header_bytes = _canonical_json(header)
    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<I", len(header_bytes))
    payload += header_bytes
    for arr in arrays.values():
        payload += np.ascontiguousarray(arr).astype(
            arr.dtype.newbyteorder("<"), copy=False).tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def read_blob(path: Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorruptDatasetError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CorruptDatasetError(f"{path} is not a dataset container")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise CorruptDatasetError(f"{path} is truncated (header)")
    try:
        header = json.loads(raw[8:8 + header_len])
    except json.JSONDecodeError as exc:
        raise CorruptDatasetError(f"{path} has a corrupt header") from exc
    if header.get("version") != FORMAT_VERSION:
        raise CorruptDatasetError(
            f"{path} has unsupported version {header.get('version')!r}")
    arrays: dict[str, np.ndarray] = {}
    offset = 8 + header_len
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise CorruptDatasetError(f"{path} is truncated (arrays)")
        arrays[entry["name"]] = np.frombuffer(
            raw, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
            offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CorruptDatasetError(f"{path} has trailing bytes")
    return arrays, header["meta"]


def file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _episode_arrays(record: EpisodeRecord) -> dict[str, np.ndarray]:
    return {
        "obs_translations": record.observed.translations,
        "obs_orientations": record.observed.orientations,
        "obs_pose_embeddings": record.observed.pose_embeddings,
        "gaze_points": record.gaze.points,
        "fut_translations": record.future.translations,
        "fut_orientations": record.future.orientations,
        "fut_pose_embeddings": record.future.pose_embeddings,
    }


def _episode_from_arrays(arrays: dict[str, np.ndarray], meta: dict,
                         frame_rate: float) -> EpisodeRecord:
    observed = sequence_from_arrays(
        arrays["obs_translations"], arrays["obs_orientations"],
        arrays["obs_pose_embeddings"], frame_rate)
    future = sequence_from_arrays(
        arrays["fut_translations"], arrays["fut_orientations"],
        arrays["fut_pose_embeddings"], frame_rate)
    return EpisodeRecord(
        scene_id=meta["scene_id"], observed=observed,
        gaze=GazeSequence(points=arrays["gaze_points"]), future=future,
        goal_label=meta["goal_label"])


@dataclass
class SceneEntry:
    scene_id: str
    cloud: ScenePointCloud
    spec: SceneSpec
    seed: int


@dataclass
class EpisodeEntry:
    episode_id: str
    record: EpisodeRecord
    split: str


@dataclass
class Dataset:
    seed: int
    horizon: HorizonConfig
    scenes: dict[str, SceneEntry]
    episodes: list[EpisodeEntry]
    root: Path | None = None

    def split(self, name: str) -> list[EpisodeEntry]:
        if name not in ("train", "eval"):
            raise ValueError(f"unknown split {name!r}")
        return [e for e in self.episodes if e.split == name]

    @property
    def scene_ids(self) -> list[str]:
        return sorted(self.scenes)


def build_dataset(scenes: int = 8, episodes_per_scene: int = 50,
                  seed: int = 0, horizon: HorizonConfig | None = None,
                  target_points: int = 4096) -> Dataset:
    """Generate scenes and episodes in memory.

    Every scene and episode derives its randomness from (seed, indices),
    so regeneration with the same arguments is bit-identical and episode
    generation could be parallelized without changing results.
    """
    horizon = horizon or HorizonConfig()
    specs = benchmark_scene_specs(scenes, seed=seed, target_points=target_points)
    scene_entries: dict[str, SceneEntry] = {}
    episode_entries: list[EpisodeEntry] = []
    for i, spec in enumerate(specs):
        scene_id = f"scene_{i:03d}"
        scene_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        cloud, _ = generate_scene(spec, scene_seed)
        scene_entries[scene_id] = SceneEntry(scene_id=scene_id, cloud=cloud,
                                             spec=spec, seed=scene_seed)
        for j in range(episodes_per_scene):
            record = generate_episode(spec, np.random.SeedSequence([seed, i, j]),
                                      horizon, scene_id=scene_id)
            split = "eval" if j % 5 == 4 else "train"
            episode_entries.append(EpisodeEntry(
                episode_id=f"ep_{i:03d}_{j:03d}", record=record, split=split))
    return Dataset(seed=seed, horizon=horizon, scenes=scene_entries,
                   episodes=episode_entries)


def write_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write a dataset directory with manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "version": FORMAT_VERSION,
        "seed": dataset.seed,
        "horizon": {
            "observed_frames": dataset.horizon.observed_frames,
            "future_frames": dataset.horizon.future_frames,
            "frame_rate": dataset.horizon.frame_rate,
        },
        "scenes": [],
        "episodes": [],
    }
    for scene_id in dataset.scene_ids:
        entry = dataset.scenes[scene_id]
        rel = f"scenes/{scene_id}.bin"
        digest = write_blob(out / rel, {"points": entry.cloud.points},
                            {"scene_id": scene_id, "units": "m",
                             "seed": entry.seed,
                             "point_count": entry.cloud.n,
                             "spec": spec_to_dict(entry.spec)})
        manifest["scenes"].append({"id": scene_id, "file": rel,
                                   "sha256": digest, "seed": entry.seed,
                                   "spec": spec_to_dict(entry.spec)})
    for entry in dataset.episodes:
        rel = f"episodes/{entry.episode_id}.bin"
        digest = write_blob(out / rel, _episode_arrays(entry.record),
                            {"scene_id": entry.record.scene_id,
                             "goal_label": entry.record.goal_label,
                             "episode_id": entry.episode_id})
        manifest["episodes"].append({
            "id": entry.episode_id, "file": rel, "sha256": digest,
            "scene_id": entry.record.scene_id, "split": entry.split,
            "goal_label": entry.record.goal_label,
        })
    manifest_path = out / MANIFEST_NAME
    manifest_path.write_bytes(_canonical_json(manifest))
    dataset.root = out
    return manifest_path


def generate_dataset(out_dir: str | Path, scenes: int = 8,
                     episodes_per_scene: int = 50, seed: int = 0,
                     horizon: HorizonConfig | None = None,
                     target_points: int = 4096) -> Path:
    """Generate and write a complete dataset; returns the manifest path."""
    dataset = build_dataset(scenes=scenes, episodes_per_scene=episodes_per_scene,
                            seed=seed, horizon=horizon,
                            target_points=target_points)
    return write_dataset(dataset, out_dir)


def read_dataset(path: str | Path, verify: bool = True) -> Dataset:
    """Load a dataset directory, verifying manifest hashes."""
    root_path = Path(path)
    manifest_path = (root_path if root_path.name == MANIFEST_NAME
                     else root_path / MANIFEST_NAME)
    root = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_bytes())
    except OSError as exc:
        raise CorruptDatasetError(f"cannot read manifest: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptDatasetError("manifest is not valid JSON") from exc
    if manifest.get("version") != FORMAT_VERSION:
        raise CorruptDatasetError(
            f"unsupported dataset version {manifest.get('version')!r}")
    horizon = HorizonConfig(**manifest["horizon"])
    scenes: dict[str, SceneEntry] = {}
    for entry in manifest["scenes"]:
        file = root / entry["file"]
        if verify and file_sha256(file) != entry["sha256"]:
            raise CorruptDatasetError(f"hash mismatch for {entry['file']}")
        arrays, meta = read_blob(file)
        scenes[entry["id"]] = SceneEntry(
            scene_id=entry["id"],
            cloud=ScenePointCloud(points=arrays["points"]),
            spec=spec_from_dict(meta["spec"]),
            seed=int(meta["seed"]))
    episodes: list[EpisodeEntry] = []
    for entry in manifest["episodes"]:
        file = root / entry["file"]
        if verify and file_sha256(file) != entry["sha256"]:
            raise CorruptDatasetError(f"hash mismatch for {entry['file']}")
        arrays, meta = read_blob(file)
        record = _episode_from_arrays(arrays, meta, horizon.frame_rate)
        if record.scene_id not in scenes:
            raise CorruptDatasetError(
                f"episode {entry['id']} references unknown scene "
                f"{record.scene_id!r}")
        episodes.append(EpisodeEntry(episode_id=entry["id"], record=record,
                                     split=entry["split"]))
    return Dataset(root=root, seed=int(manifest["seed"]), horizon=horizon,
                   scenes=scenes, episodes=episodes)
