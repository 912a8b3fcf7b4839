"""Benchmark generation, the three test metrics, model evaluation and the effector sweep.

Benchmark files freeze (ground-truth pose, effector configuration) pairs so
every model sees identical inputs. Tolerances and noise are drawn once at
generation time. Files serialize to the effector interchange notation plus a
header and are byte-identical when regenerated from the same seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .dataset import PoseDataset
from .effectors import (
    Effector,
    EffectorSet,
    EffectorType,
    corrupt_position_effector,
    corrupt_rotation_effector,
    effector_from_dict,
    effector_to_dict,
    generate_lookat_effector,
    tolerance_to_noise_std,
)
from .errors import FormatError, ShapeError, SkeletonError
from .kinematics import Pose, fk_pose, geodesic_distance, quaternion_to_matrix
from .model import model_forward
from .skeleton import LIMB_ZONES, SkeletonSpec

FIVE_POINT_JOINTS = ("Chest", "HandLeft", "HandRight", "FootLeft", "FootRight")


@dataclass
class BenchmarkItem:
    pose: Pose
    effectors: list[Effector]


@dataclass
class BenchmarkFile:
    n_effectors: int
    seed: int | None
    dataset_hash: str
    items: list[BenchmarkItem]

    def to_dict(self, skeleton: SkeletonSpec | None = None) -> dict:
        return {
            "n_effectors": self.n_effectors,
            "seed": self.seed,
            "dataset_hash": self.dataset_hash,
            "items": [
                {
                    "pose": {
                        "root_position": [float(v) for v in item.pose.root_position],
                        "rotations": [[float(v) for v in q] for q in item.pose.joint_rotations],
                    },
                    "effectors": [effector_to_dict(e, skeleton) for e in item.effectors],
                }
                for item in self.items
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, skeleton: SkeletonSpec | None = None) -> "BenchmarkFile":
        try:
            items = [
                BenchmarkItem(
                    pose=Pose(
                        np.array(entry["pose"]["root_position"]),
                        np.array(entry["pose"]["rotations"]),
                    ),
                    effectors=[effector_from_dict(e, skeleton) for e in entry["effectors"]],
                )
                for entry in data["items"]
            ]
            return cls(
                n_effectors=int(data["n_effectors"]),
                seed=data.get("seed"),
                dataset_hash=str(data["dataset_hash"]),
                items=items,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed benchmark file: {exc}") from exc


def save_benchmark_file(bench: BenchmarkFile, path: str | Path,
                        skeleton: SkeletonSpec | None = None) -> None:
    Path(path).write_text(
        json.dumps(bench.to_dict(skeleton), sort_keys=True, separators=(",", ":")) + "\n"
    )


def load_benchmark_file(path: str | Path, skeleton: SkeletonSpec | None = None) -> BenchmarkFile:
    return BenchmarkFile.from_dict(json.loads(Path(path).read_text()), skeleton)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _ground_truth(skeleton: SkeletonSpec, pose: Pose):
    transforms = fk_pose(skeleton, pose)
    return transforms.positions.numpy(), transforms.rotations.numpy()


def generate_random_benchmark(dataset: PoseDataset, skeleton: SkeletonSpec, seed: int = 0,
                              n_range: tuple[int, int] = (6, 12),
                              sigma_max: float = 0.1, eta: float = 13.0
                              ) -> list[BenchmarkFile]:
    """One file per effector count in n_range, one item per dataset frame.

    Every item starts with four positional effectors, one sampled from each
    limb zone; the remaining effectors are sampled from all zones and all
    three types without duplicating a (joint, type) pair. Tolerances and
    noise are drawn once and frozen.
    """
    for zone in LIMB_ZONES:
        if not skeleton.zones[zone]:
            raise SkeletonError(f"limb zone {zone!r} is empty")
    rng = np.random.default_rng(seed)
    dataset_hash = dataset.content_hash()
    files = []
    for n_effectors in range(n_range[0], n_range[1] + 1):
        items = []
        for frame in range(len(dataset)):
            pose = dataset.pose(frame)
            gt_pos, gt_rot = _ground_truth(skeleton, pose)
            chosen: list[tuple[int, EffectorType]] = []
            for zone in LIMB_ZONES:
                joint = int(rng.choice(skeleton.zones[zone]))
                chosen.append((joint, EffectorType.POSITION))
            used = set(chosen)
            pool = [
                (j, EffectorType(t))
                for j in range(skeleton.joint_count)
                for t in range(3)
                if (j, EffectorType(t)) not in used
            ]
            extra = rng.choice(len(pool), size=n_effectors - len(chosen), replace=False)
            chosen.extend(pool[int(k)] for k in extra)
            effectors = []
            for joint, etype in chosen:
                tolerance = float(rng.uniform(0.0, 1.0))
                sigma = tolerance_to_noise_std(tolerance, sigma_max, eta)
                if etype == EffectorType.POSITION:
                    data = corrupt_position_effector(gt_pos[joint], sigma, rng)
                elif etype == EffectorType.ROTATION:
                    data = corrupt_rotation_effector(gt_rot[joint], sigma, rng)
                else:
                    data = generate_lookat_effector(gt_pos[joint], gt_rot[joint], sigma, rng)
                effectors.append(Effector(joint, etype, data, tolerance))
            items.append(BenchmarkItem(pose, effectors))
        files.append(BenchmarkFile(n_effectors, seed, dataset_hash, items))
    return files


def generate_5point_benchmark(dataset: PoseDataset, skeleton: SkeletonSpec,
                              joint_names: tuple[str, ...] = FIVE_POINT_JOINTS,
                              tolerance: float = 0.0) -> BenchmarkFile:
    """Every item pins the five named joints at their ground-truth positions."""
    try:
        joints = [skeleton.resolve_joint(name) for name in joint_names]
    except SkeletonError as exc:
        raise SkeletonError(f"5-point benchmark: {exc}") from exc
    items = []
    for frame in range(len(dataset)):
        pose = dataset.pose(frame)
        gt_pos, _ = _ground_truth(skeleton, pose)
        effectors = [
            Effector(j, EffectorType.POSITION,
                     np.concatenate([gt_pos[j], np.zeros(3)]), tolerance)
            for j in joints
        ]
        items.append(BenchmarkItem(pose, effectors))
    return BenchmarkFile(len(joints), None, dataset.content_hash(), items)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class ItemPrediction:
    draft_positions: np.ndarray   # (J, 3)
    local_rotations: np.ndarray   # (J, 3, 3)
    global_positions: np.ndarray  # (J, 3)


SolveFn = Callable[[BenchmarkItem], ItemPrediction]


@dataclass
class MetricsReport:
    gpd_l2: float      # root-only draft position error
    ikd_l2: float      # summed post-FK position error
    loc_geo: float     # summed local geodesic error
    item_count: int
    per_file: list[dict]

    def to_dict(self) -> dict:
        return {
            "L_gpd-L2_det": self.gpd_l2,
            "L_ikd-L2_det": self.ikd_l2,
            "L_loc-geo_det": self.loc_geo,
            "item_count": self.item_count,
            "per_file": self.per_file,
        }

    def format_table(self) -> str:
        header = f"{'file':>12} {'items':>7} {'L_gpd-L2_det':>14} {'L_ikd-L2_det':>14} {'L_loc-geo_det':>14}"
        lines = [header]
        for row in self.per_file:
            lines.append(
                f"{row['name']:>12} {row['item_count']:>7} "
                f"{row['L_gpd-L2_det']:>14.6e} {row['L_ikd-L2_det']:>14.6e} "
                f"{row['L_loc-geo_det']:>14.6e}"
            )
        lines.append(
            f"{'ALL':>12} {self.item_count:>7} "
            f"{self.gpd_l2:>14.6e} {self.ikd_l2:>14.6e} {self.loc_geo:>14.6e}"
        )
        return "\n".join(lines) + "\n"


def network_solver(network: torch.nn.Module, skeleton: SkeletonSpec) -> SolveFn:
    """Wrap a trained network as a benchmark solve function (eval mode)."""

    def solve(item: BenchmarkItem) -> ItemPrediction:
        effector_set = EffectorSet(list(item.effectors), skeleton)
        output = model_forward(effector_set, skeleton, network, mode="eval")
        return ItemPrediction(
            draft_positions=output.draft_positions[0].numpy(),
            local_rotations=output.local_rotations[0].numpy(),
            global_positions=output.global_positions[0].numpy(),
        )

    return solve


def oracle_solver(skeleton: SkeletonSpec) -> SolveFn:
    """Ground-truth passthrough used to validate the metric pipeline."""

    def solve(item: BenchmarkItem) -> ItemPrediction:
        transforms = fk_pose(skeleton, item.pose)
        return ItemPrediction(
            draft_positions=transforms.positions.numpy(),
            local_rotations=quaternion_to_matrix(
                torch.from_numpy(item.pose.joint_rotations)).numpy(),
            global_positions=transforms.positions.numpy(),
        )

    return solve


def _item_metrics(skeleton: SkeletonSpec, item: BenchmarkItem, prediction: ItemPrediction
                  ) -> tuple[float, float, float]:
    gt_pos, _ = _ground_truth(skeleton, item.pose)
    gt_local = quaternion_to_matrix(torch.from_numpy(item.pose.joint_rotations)).numpy()
    gpd = float(np.sum((gt_pos[0] - prediction.draft_positions[0]) ** 2))
    ikd = float(np.sum((gt_pos - prediction.global_positions) ** 2))
    # Metric path: exact [-1, 1] clamp so a perfect prediction scores zero.
    loc = float(geodesic_distance(
        torch.from_numpy(gt_local),
        torch.from_numpy(np.ascontiguousarray(prediction.local_rotations, dtype=np.float64)),
        eps_clamp=0.0,
    ).sum())
    return gpd, ikd, loc


def evaluate_model(solve: SolveFn, files: list[BenchmarkFile], skeleton: SkeletonSpec,
                   file_names: list[str] | None = None) -> MetricsReport:
    """Run a solver over benchmark files and average metrics over all items."""
    per_file = []
    totals = np.zeros(3)
    total_items = 0
    for index, bench in enumerate(files):
        sums = np.zeros(3)
        for item in bench.items:
            if item.pose.joint_count != skeleton.joint_count:
                raise ShapeError(
                    f"benchmark pose has {item.pose.joint_count} joints, "
                    f"skeleton has {skeleton.joint_count}"
                )
            sums += np.array(_item_metrics(skeleton, item, solve(item)))
        count = len(bench.items)
        name = file_names[index] if file_names else f"N={bench.n_effectors}"
        per_file.append({
            "name": name,
            "n_effectors": bench.n_effectors,
            "item_count": count,
            "L_gpd-L2_det": sums[0] / count if count else 0.0,
            "L_ikd-L2_det": sums[1] / count if count else 0.0,
            "L_loc-geo_det": sums[2] / count if count else 0.0,
        })
        totals += sums
        total_items += count
    if total_items == 0:
        raise ShapeError("no benchmark items to evaluate")
    return MetricsReport(
        gpd_l2=totals[0] / total_items,
        ikd_l2=totals[1] / total_items,
        loc_geo=totals[2] / total_items,
        item_count=total_items,
        per_file=per_file,
    )


# ---------------------------------------------------------------------------
# Effector-count sweep
# ---------------------------------------------------------------------------

def effector_sweep(solve: SolveFn, dataset: PoseDataset, skeleton: SkeletonSpec,
                   type_mix: str, fractions: list[float], seed: int = 0) -> list[dict]:
    """Metrics as a function of the share of joints used as effectors.

    type_mix is one of "position", "rotation", "mixed". Effectors are exact
    ground-truth encodings (zero noise, zero tolerance) of the sampled joints.
    """
    if type_mix not in ("position", "rotation", "mixed"):
        raise ShapeError(f"type_mix must be position|rotation|mixed, got {type_mix!r}")
    rng = np.random.default_rng(seed)
    rows = []
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise ShapeError(f"fractions must be in (0, 1], got {fraction}")
        count = max(1, int(round(fraction * skeleton.joint_count)))
        sums = np.zeros(2)
        for frame in range(len(dataset)):
            pose = dataset.pose(frame)
            gt_pos, gt_rot = _ground_truth(skeleton, pose)
            joints = rng.choice(skeleton.joint_count, size=count, replace=False)
            effectors = []
            for joint in joints:
                joint = int(joint)
                if type_mix == "position":
                    etype = EffectorType.POSITION
                elif type_mix == "rotation":
                    etype = EffectorType.ROTATION
                else:
                    etype = EffectorType(int(rng.integers(0, 2)))
                if etype == EffectorType.POSITION:
                    data = np.concatenate([gt_pos[joint], np.zeros(3)])
                else:
                    data = corrupt_rotation_effector(gt_rot[joint], 0.0, rng)
                effectors.append(Effector(joint, etype, data, 0.0))
            item = BenchmarkItem(pose, effectors)
            _, ikd, loc = _item_metrics(skeleton, item, solve(item))
            sums += np.array([ikd, loc])
        rows.append({
            "fraction": fraction,
            "position_metric": sums[0] / len(dataset),
            "rotation_metric": sums[1] / len(dataset),
        })
    return rows
