"""Pose dataset storage, importers, clip-level splitting and descriptive statistics.

Canonical storage is root position + per-joint local quaternions; global
transforms are always derived through FK so stored and derived data cannot
disagree. The binary format is little-endian:

  magic b"PRSD", u32 version, u32 joint count, u64 frame count,
  then per frame 3 x f32 root position and J x 4 x f32 quaternions (x,y,z,w).

An optional sidecar `<path>.clips.json` carries the clip index.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import DataError, FormatError, ShapeError
from .kinematics import (
    Pose,
    euler_to_matrix,
    forward_kinematics,
    matrix_to_quaternion,
    quaternion_to_matrix,
)
from .skeleton import SkeletonSpec

MAGIC = b"PRSD"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


@dataclass
class PoseDataset:
    skeleton: SkeletonSpec
    root_positions: np.ndarray  # (F, 3) float32
    rotations: np.ndarray       # (F, J, 4) float32, unit quaternions (x,y,z,w)
    clip_index: list[tuple[str, int, int]] | None = None  # (clip_id, start, end)

    def __post_init__(self):
        self.root_positions = np.asarray(self.root_positions, dtype=np.float32)
        self.rotations = np.asarray(self.rotations, dtype=np.float32)
        if self.root_positions.ndim != 2 or self.root_positions.shape[1] != 3:
            raise ShapeError(f"root_positions must be (F, 3), got {self.root_positions.shape}")
        expected = (len(self.root_positions), self.skeleton.joint_count, 4)
        if self.rotations.shape != expected:
            raise ShapeError(f"rotations must be {expected}, got {self.rotations.shape}")
        if self.clip_index is not None:
            self._check_clip_index()

    def _check_clip_index(self) -> None:
        cursor = 0
        for clip_id, start, end in self.clip_index:
            if start != cursor or end <= start:
                raise DataError(
                    f"clip {clip_id!r} range [{start}, {end}) does not partition the frames"
                )
            cursor = end
        if cursor != len(self):
            raise DataError(f"clip index covers {cursor} frames, dataset has {len(self)}")

    def __len__(self) -> int:
        return len(self.root_positions)

    def pose(self, index: int) -> Pose:
        return Pose(
            self.root_positions[index].astype(np.float64),
            self.rotations[index].astype(np.float64),
        )

    def validate(self, quat_tol: float = 1e-3) -> "PoseDataset":
        norms = np.linalg.norm(self.rotations.astype(np.float64), axis=-1)
        worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
        if worst > quat_tol:
            raise DataError(f"quaternion norms deviate from 1 by up to {worst:.2e}")
        return self

    def effective_clips(self) -> list[tuple[str, int, int]]:
        """Clip index, or one pseudo-clip per frame for anonymized datasets."""
        if self.clip_index is not None:
            return list(self.clip_index)
        return [(f"frame-{i}", i, i + 1) for i in range(len(self))]

    def select(self, frame_indices: np.ndarray) -> "PoseDataset":
        """Subset by frame indices (order preserved); clip ranges are rebuilt."""
        frame_indices = np.asarray(frame_indices, dtype=np.int64)
        clip_index = None
        if self.clip_index is not None:
            clip_index = []
            cursor = 0
            for clip_id, start, end in self.clip_index:
                count = int(np.sum((frame_indices >= start) & (frame_indices < end)))
                if count:
                    clip_index.append((clip_id, cursor, cursor + count))
                    cursor += count
        return PoseDataset(
            self.skeleton,
            self.root_positions[frame_indices],
            self.rotations[frame_indices],
            clip_index,
        )

    def content_hash(self) -> str:
        import hashlib

        digest = hashlib.sha256()
        digest.update(struct.pack("<II", self.skeleton.joint_count, len(self)))
        digest.update(np.ascontiguousarray(self.root_positions, dtype="<f4").tobytes())
        digest.update(np.ascontiguousarray(self.rotations, dtype="<f4").tobytes())
        return digest.hexdigest()


def save_dataset(dataset: PoseDataset, path: str | Path) -> None:
    path = Path(path)
    joint_count = dataset.skeleton.joint_count
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, joint_count, len(dataset)))
        frame_dtype = np.dtype("<f4")
        for i in range(len(dataset)):
            fh.write(np.ascontiguousarray(dataset.root_positions[i], dtype=frame_dtype).tobytes())
            fh.write(np.ascontiguousarray(dataset.rotations[i], dtype=frame_dtype).tobytes())
    sidecar = path.with_name(path.name + ".clips.json")
    if dataset.clip_index is not None:
        sidecar.write_text(json.dumps(
            [{"clip": c, "start": s, "end": e} for c, s, e in dataset.clip_index]
        ) + "\n")
    elif sidecar.exists():
        sidecar.unlink()


def load_dataset(path: str | Path, skeleton: SkeletonSpec) -> PoseDataset:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("dataset file too short for header")
    magic, version, joint_count, frame_count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    if joint_count != skeleton.joint_count:
        raise FormatError(
            f"dataset has {joint_count} joints, skeleton has {skeleton.joint_count}"
        )
    frame_bytes = 4 * (3 + 4 * joint_count)
    expected = _HEADER.size + frame_count * frame_bytes
    if len(raw) != expected:
        raise FormatError(f"file size {len(raw)} != expected {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(frame_count, -1)
    root_positions = flat[:, :3].copy()
    rotations = flat[:, 3:].reshape(frame_count, joint_count, 4).copy()
    clip_index = None
    sidecar = path.with_name(path.name + ".clips.json")
    if sidecar.exists():
        entries = json.loads(sidecar.read_text())
        clip_index = [(e["clip"], int(e["start"]), int(e["end"])) for e in entries]
    dataset = PoseDataset(skeleton, root_positions, rotations, clip_index)
    return dataset.validate()


# ---------------------------------------------------------------------------
# CSV import
# ---------------------------------------------------------------------------

@dataclass
class CsvColumnSpec:
    """Maps CSV columns to pose fields.

    root: three column names for the root position.
    joints: per joint name, its rotation column names — 4 columns (x,y,z,w)
    when rotation_format is "quaternion", 3 (z-, y-, x-axis angles in radians)
    when "euler".
    global_positions: optional per joint name, three columns of global joint
    positions used to cross-check FK against the source data.
    """

    root: tuple[str, str, str]
    joints: dict[str, list[str]]
    rotation_format: str = "quaternion"
    global_positions: dict[str, list[str]] | None = None
    clip_column: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "CsvColumnSpec":
        return cls(
            root=tuple(data["root"]),
            joints={k: list(v) for k, v in data["joints"].items()},
            rotation_format=data.get("rotation_format", "quaternion"),
            global_positions={k: list(v) for k, v in data["global_positions"].items()}
            if data.get("global_positions") else None,
            clip_column=data.get("clip_column"),
        )


def import_csv(path: str | Path, skeleton: SkeletonSpec, columns: CsvColumnSpec,
               fk_tolerance: float = 1e-3) -> tuple[PoseDataset, float]:
    """Import poses from a CSV file; returns (dataset, max FK deviation).

    When the column spec names global position columns, the FK of the imported
    local rotations is validated against them and a deviation beyond
    `fk_tolerance` raises DataError naming the worst joints.
    """
    if columns.rotation_format not in ("quaternion", "euler"):
        raise DataError(f"unknown rotation_format {columns.rotation_format!r}")
    per_joint = 4 if columns.rotation_format == "quaternion" else 3
    for name in skeleton.names:
        if name not in columns.joints:
            raise DataError(f"column spec missing joint {name!r}")
        if len(columns.joints[name]) != per_joint:
            raise DataError(
                f"joint {name!r} needs {per_joint} rotation columns, "
                f"got {len(columns.joints[name])}"
            )

    roots, quats, clips = [], [], []
    globals_ref = [] if columns.global_positions else None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row_number, row in enumerate(reader, start=2):  # header is line 1
            def cell(column: str) -> float:
                if column not in row:
                    raise DataError(f"row {row_number}: missing column {column!r}")
                try:
                    return float(row[column])
                except ValueError:
                    raise DataError(
                        f"row {row_number}: column {column!r} is not a number "
                        f"({row[column]!r})"
                    ) from None

            roots.append([cell(c) for c in columns.root])
            frame = []
            for name in skeleton.names:
                values = [cell(c) for c in columns.joints[name]]
                if columns.rotation_format == "quaternion":
                    frame.append(values)
                else:
                    matrix = euler_to_matrix(np.array(values, dtype=np.float64))
                    frame.append(matrix_to_quaternion(matrix.numpy()).tolist())
            quats.append(frame)
            if globals_ref is not None:
                globals_ref.append(
                    [[cell(c) for c in columns.global_positions[name]]
                     for name in skeleton.names
                     if name in columns.global_positions]
                )
            if columns.clip_column is not None:
                clips.append(row.get(columns.clip_column, ""))

    if not roots:
        raise DataError(f"{path}: no data rows")
    quat_arr = np.asarray(quats, dtype=np.float64)
    norms = np.linalg.norm(quat_arr, axis=-1, keepdims=True)
    if np.any(norms < 1e-8):
        raise DataError("zero quaternion in source rows")
    quat_arr = quat_arr / norms

    clip_index = None
    if columns.clip_column is not None:
        clip_index = []
        start = 0
        for i in range(1, len(clips) + 1):
            if i == len(clips) or clips[i] != clips[start]:
                clip_index.append((clips[start], start, i))
                start = i
    dataset = PoseDataset(skeleton, np.asarray(roots, dtype=np.float32),
                          quat_arr.astype(np.float32), clip_index)

    max_deviation = 0.0
    if globals_ref is not None:
        checked = [name for name in skeleton.names if name in columns.global_positions]
        indices = [skeleton.index_of[name] for name in checked]
        fk_positions = batch_fk_positions(dataset)
        reference = np.asarray(globals_ref, dtype=np.float64)
        deviation = np.linalg.norm(fk_positions[:, indices, :] - reference, axis=-1)
        max_deviation = float(deviation.max())
        if max_deviation > fk_tolerance:
            per_joint_worst = deviation.max(axis=0)
            order = np.argsort(per_joint_worst)[::-1][:5]
            worst = ", ".join(f"{checked[i]}={per_joint_worst[i]:.3g}" for i in order)
            raise DataError(
                f"FK positions deviate from source globals by up to "
                f"{max_deviation:.3g} (tolerance {fk_tolerance:g}); worst joints: {worst}"
            )
    return dataset, max_deviation


# ---------------------------------------------------------------------------
# Splits, subsampling, statistics
# ---------------------------------------------------------------------------

def split_by_clip(dataset: PoseDataset, proportions=(0.8, 0.1, 0.1), seed: int = 0
                  ) -> tuple[PoseDataset, PoseDataset, PoseDataset]:
    """Shuffle clip ids and assign whole clips to train/valid/test by proportion."""
    if len(proportions) != 3 or abs(sum(proportions) - 1.0) > 1e-9:
        raise DataError(f"proportions must be three values summing to 1, got {proportions}")
    clips = dataset.effective_clips()
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(clips))
    n_train = int(np.floor(proportions[0] * len(clips)))
    n_valid = int(np.floor((proportions[0] + proportions[1]) * len(clips))) - n_train
    groups = (
        order[:n_train],
        order[n_train:n_train + n_valid],
        order[n_train + n_valid:],
    )
    out = []
    for group in groups:
        frame_indices = np.concatenate(
            [np.arange(clips[c][1], clips[c][2]) for c in sorted(group)]
        ) if len(group) else np.empty(0, dtype=np.int64)
        out.append(dataset.select(frame_indices))
    return tuple(out)


def subsample_frames(dataset: PoseDataset, fraction: float, seed: int = 0) -> PoseDataset:
    """Uniform without-replacement frame sample, original order preserved."""
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return dataset.select(np.arange(len(dataset)))
    rng = np.random.default_rng(seed)
    count = max(1, int(round(fraction * len(dataset))))
    chosen = np.sort(rng.choice(len(dataset), size=count, replace=False))
    return dataset.select(chosen)


def batch_fk_positions(dataset: PoseDataset) -> np.ndarray:
    """Global joint positions of every frame, shape (F, J, 3)."""
    with torch.no_grad():
        rotations = quaternion_to_matrix(
            torch.from_numpy(dataset.rotations.astype(np.float64))
        )
        transforms = forward_kinematics(
            dataset.skeleton,
            torch.from_numpy(dataset.root_positions.astype(np.float64)),
            rotations,
        )
    return transforms.positions.numpy()


@dataclass
class DatasetStats:
    joint_names: list[str]
    position_std: np.ndarray    # (J, 3) std of hip-local global positions
    quaternion_std: np.ndarray  # (J, 4) std of local quaternion components


def dataset_stats(dataset: PoseDataset) -> DatasetStats:
    """Per-joint stds of hip-local positions and local quaternion components.

    "Hip-local" subtracts the root joint's global position per frame (no
    rotation re-referencing), so the root row is zero by construction.
    """
    if len(dataset) == 0:
        raise DataError("cannot compute statistics of an empty dataset")
    positions = batch_fk_positions(dataset)
    hip_local = positions - positions[:, 0:1, :]
    return DatasetStats(
        joint_names=list(dataset.skeleton.names),
        position_std=hip_local.std(axis=0),
        quaternion_std=dataset.rotations.astype(np.float64).std(axis=0),
    )


def format_stats_table(stats: DatasetStats, decimals: int = 4) -> str:
    """Two aligned text tables: position stds (X Y Z) and quaternion stds (X Y Z W)."""
    name_width = max(len("Joint"), max(len(n) for n in stats.joint_names))

    def fmt(value: float) -> str:
        return f"{round(float(value), decimals):g}"

    lines = ["Per-joint hip-local position standard deviations",
             f"{'Joint':<{name_width}}  {'X':>8} {'Y':>8} {'Z':>8}"]
    for name, row in zip(stats.joint_names, stats.position_std):
        lines.append(f"{name:<{name_width}}  {fmt(row[0]):>8} {fmt(row[1]):>8} {fmt(row[2]):>8}")
    lines.append("")
    lines.append("Per-joint quaternion component standard deviations")
    lines.append(f"{'Joint':<{name_width}}  {'X':>8} {'Y':>8} {'Z':>8} {'W':>8}")
    for name, row in zip(stats.joint_names, stats.quaternion_std):
        lines.append(
            f"{name:<{name_width}}  {fmt(row[0]):>8} {fmt(row[1]):>8} "
            f"{fmt(row[2]):>8} {fmt(row[3]):>8}"
        )
    return "\n".join(lines) + "\n"
