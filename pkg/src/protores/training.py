"""End-to-end training: batch sampling with augmentation, the seven loss terms,
randomized loss weighting, the optimizer loop and telemetry.

Per batch item: augment the pose, compute ground-truth globals by FK, sample
effectors, draw a tolerance per effector, derive its noise std and loss
weight, and corrupt the effector payload with the type-appropriate noise
model. The randomized loss terms are weight-averaged over the effectors of
their type; the deterministic terms sum over all joints.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig
from .dataset import PoseDataset
from .effectors import (
    Effector,
    EffectorSet,
    EffectorType,
    center_effectors,
    corrupt_position_effector,
    corrupt_rotation_effector,
    generate_lookat_effector,
    sample_effector_set,
    tolerance_to_noise_std,
    tolerance_to_weight,
)
from .errors import NumericalError, ShapeError
from .kinematics import (
    Pose,
    forward_kinematics,
    geodesic_distance,
    lookat_error,
    mirror_pose,
    quaternion_to_matrix,
    rotate_pose_about_y,
    squared_distance,
)
from .model import ForwardOutput, build_network, load_network_parameters, \
    network_parameters_numpy, run_network
from .skeleton import SkeletonSpec


@dataclass
class BatchItem:
    effectors: EffectorSet     # world-frame payloads as fed to the noise models
    weights: np.ndarray        # (N,) loss weight per effector
    gt_positions: np.ndarray   # (J, 3) global joint positions
    gt_global_rotations: np.ndarray  # (J, 3, 3)
    gt_local_rotations: np.ndarray   # (J, 3, 3)


@dataclass
class LossBreakdown:
    gpd_l2_rnd: float
    ikd_l2_rnd: float
    gpd_l2_det: float
    ikd_l2_det: float
    loc_geo_det: float
    glob_geo_rnd: float
    lookat_det: float
    total: float

    def recompute_total(self, w_pos: float, joint_count: int) -> float:
        return (w_pos / joint_count) * (
            self.gpd_l2_rnd + self.ikd_l2_rnd + self.gpd_l2_det + self.ikd_l2_det
        ) + (1.0 / joint_count) * (
            self.lookat_det + self.glob_geo_rnd + self.loc_geo_det
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def augment_pose(pose: Pose, skeleton: SkeletonSpec, rng: np.random.Generator,
                 config: TrainConfig) -> Pose:
    if config.augment_rotate_y:
        pose = rotate_pose_about_y(pose, rng.uniform(0.0, 2.0 * np.pi))
    if config.augment_mirror and rng.random() < 0.5:
        pose = mirror_pose(skeleton, pose)
    return pose


def prepare_batch_item(pose: Pose, skeleton: SkeletonSpec, rng: np.random.Generator,
                       config: TrainConfig, n_effectors: int | None = None) -> BatchItem:
    """Augment, FK, sample effectors, draw tolerances and corrupt payloads."""
    pose = augment_pose(pose, skeleton, rng, config)
    with torch.no_grad():
        local = quaternion_to_matrix(torch.from_numpy(pose.joint_rotations))
        transforms = forward_kinematics(skeleton, torch.from_numpy(pose.root_position), local)
    gt_positions = transforms.positions.numpy()
    gt_global = transforms.rotations.numpy()
    gt_local = local.numpy()

    n_range = (n_effectors, n_effectors) if n_effectors is not None \
        else (config.n_effectors_min, config.n_effectors_max)
    pairs = sample_effector_set(rng, skeleton, n_range)
    joint_ids = np.array([j for j, _ in pairs], dtype=np.int64)
    types = np.array([int(t) for _, t in pairs], dtype=np.int64)
    count = len(pairs)

    tolerances = rng.uniform(0.0, 1.0, size=count)
    sigmas = np.array([
        tolerance_to_noise_std(tolerances[i], config.sigma_max_for(types[i]), config.eta)
        for i in range(count)
    ])
    weights = np.array([tolerance_to_weight(s, config.w_max) for s in sigmas])

    data = np.empty((count, 6))
    for etype in EffectorType:
        idx = np.nonzero(types == int(etype))[0]
        if idx.size == 0:
            continue
        g = gt_positions[joint_ids[idx]]
        if etype == EffectorType.POSITION:
            data[idx] = corrupt_position_effector(g, sigmas[idx], rng)
        elif etype == EffectorType.ROTATION:
            data[idx] = corrupt_rotation_effector(gt_global[joint_ids[idx]], sigmas[idx], rng)
        else:
            data[idx] = generate_lookat_effector(g, gt_global[joint_ids[idx]], sigmas[idx], rng)

    effectors = EffectorSet(
        [Effector(joint_ids[i], EffectorType(int(types[i])), data[i], tolerances[i])
         for i in range(count)],
        skeleton,
    )
    return BatchItem(effectors, weights, gt_positions, gt_global, gt_local)


@dataclass
class AssembledBatch:
    data: torch.Tensor        # (B, N, 6) centered network input
    world_data: torch.Tensor  # (B, N, 6) uncentered payloads
    tolerances: torch.Tensor  # (B, N)
    weights: torch.Tensor     # (B, N)
    joint_ids: torch.Tensor   # (B, N) long
    types: torch.Tensor       # (B, N) long
    centroid: torch.Tensor    # (B, 3)
    gt_positions: torch.Tensor         # (B, J, 3)
    gt_global_rotations: torch.Tensor  # (B, J, 3, 3)
    gt_local_rotations: torch.Tensor   # (B, J, 3, 3)


def assemble_batch(items: list[BatchItem], dtype: torch.dtype = torch.float32) -> AssembledBatch:
    sizes = {len(it.effectors) for it in items}
    if len(sizes) != 1:
        raise ShapeError(f"all batch items must share one effector count, got {sorted(sizes)}")
    centered = [center_effectors(it.effectors) for it in items]
    as_t = lambda arrays: torch.as_tensor(np.stack(arrays), dtype=dtype)
    return AssembledBatch(
        data=as_t([c.data_matrix() for c in centered]),
        world_data=as_t([it.effectors.data_matrix() for it in items]),
        tolerances=as_t([c.tolerances() for c in centered]),
        weights=as_t([it.weights for it in items]),
        joint_ids=torch.as_tensor(np.stack([c.joint_ids() for c in centered])),
        types=torch.as_tensor(np.stack([c.types() for c in centered])),
        centroid=as_t([c.centroid for c in centered]),
        gt_positions=as_t([it.gt_positions for it in items]),
        gt_global_rotations=as_t([it.gt_global_rotations for it in items]),
        gt_local_rotations=as_t([it.gt_local_rotations for it in items]),
    )


def _weighted_mean(errors: torch.Tensor, weights: torch.Tensor, mask: torch.Tensor
                   ) -> torch.Tensor:
    """Per-item weighted mean over masked effectors; 0 where the class is empty."""
    w = weights * mask
    denom = w.sum(dim=1)
    return (w * errors).sum(dim=1) / (denom + (denom == 0))


def compute_losses(output: ForwardOutput, batch: AssembledBatch, config: TrainConfig
                   ) -> tuple[torch.Tensor, LossBreakdown]:
    """The seven loss terms of one forward pass, batch-averaged.

    Returns the differentiable total (float64) and the detached breakdown.
    The breakdown's total recomputes exactly from its parts.
    """
    joint_count = output.global_positions.shape[1]
    index3 = batch.joint_ids.unsqueeze(-1).expand(-1, -1, 3)
    draft_eff = output.draft_positions.gather(1, index3)
    global_eff = output.global_positions.gather(1, index3)
    gt_eff = batch.gt_positions.gather(1, index3)
    index_rot = batch.joint_ids.reshape(*batch.joint_ids.shape, 1, 1).expand(-1, -1, 3, 3)
    pred_rot_eff = output.global_rotations.gather(1, index_rot)
    gt_rot_eff = batch.gt_global_rotations.gather(1, index_rot)

    pos_mask = (batch.types == int(EffectorType.POSITION)).to(output.draft_positions.dtype)
    rot_mask = (batch.types == int(EffectorType.ROTATION)).to(pos_mask.dtype)
    lat_mask = (batch.types == int(EffectorType.LOOKAT)).to(pos_mask.dtype)

    gpd_l2_rnd = _weighted_mean(squared_distance(gt_eff, draft_eff), batch.weights, pos_mask)
    ikd_l2_rnd = _weighted_mean(squared_distance(gt_eff, global_eff), batch.weights, pos_mask)
    gpd_l2_det = squared_distance(batch.gt_positions, output.draft_positions).sum(dim=1)
    ikd_l2_det = squared_distance(batch.gt_positions, output.global_positions).sum(dim=1)
    loc_geo_det = geodesic_distance(batch.gt_local_rotations, output.local_rotations).sum(dim=1)
    glob_geo_rnd = _weighted_mean(
        geodesic_distance(gt_rot_eff, pred_rot_eff), batch.weights, rot_mask
    )
    lookat = lookat_error(
        batch.world_data[:, :, 0:3], batch.world_data[:, :, 3:6],
        pred_rot_eff, global_eff, strict=False,
    )
    lookat_det = _weighted_mean(lookat, torch.ones_like(batch.weights), lat_mask)

    terms = {
        "gpd_l2_rnd": gpd_l2_rnd.mean().double(),
        "ikd_l2_rnd": ikd_l2_rnd.mean().double(),
        "gpd_l2_det": gpd_l2_det.mean().double(),
        "ikd_l2_det": ikd_l2_det.mean().double(),
        "loc_geo_det": loc_geo_det.mean().double(),
        "glob_geo_rnd": glob_geo_rnd.mean().double(),
        "lookat_det": lookat_det.mean().double(),
    }
    for name, value in terms.items():
        if not bool(torch.isfinite(value)):
            raise NumericalError(f"loss term {name} is non-finite")
    total = (config.w_pos / joint_count) * (
        terms["gpd_l2_rnd"] + terms["ikd_l2_rnd"] + terms["gpd_l2_det"] + terms["ikd_l2_det"]
    ) + (1.0 / joint_count) * (
        terms["lookat_det"] + terms["glob_geo_rnd"] + terms["loc_geo_det"]
    )
    breakdown = LossBreakdown(
        **{name: float(value.detach()) for name, value in terms.items()},
        total=float(total.detach()),
    )
    return total, breakdown


def training_step(items: list[BatchItem], network: torch.nn.Module,
                  skeleton: SkeletonSpec, optimizer: torch.optim.Optimizer,
                  config: TrainConfig) -> LossBreakdown:
    """One forward/backward/update over a prepared batch.

    A non-finite loss raises NumericalError before any parameter update.
    """
    dtype = next(network.parameters()).dtype
    batch = assemble_batch(items, dtype=dtype)
    network.train(True)
    output = run_network(network, skeleton, batch.data, batch.tolerances,
                         batch.joint_ids, batch.types, batch.centroid)
    total, breakdown = compute_losses(output, batch, config)
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    network.train(False)
    return breakdown


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics: list[dict]
    network: torch.nn.Module


def make_optimizer(network: torch.nn.Module, config: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(
        network.parameters(),
        lr=config.learning_rate,
        betas=(config.adam_beta1, config.adam_beta2),
        eps=config.adam_eps,
    )


def train(dataset: PoseDataset, skeleton: SkeletonSpec, model_config: ModelConfig,
          train_config: TrainConfig, out_dir: str | Path,
          model_type: str = "protores", resume: bool = False) -> TrainResult:
    """Run the training loop; writes periodic checkpoints and a metrics log.

    `latest.prck` plus `latest.state` (optimizer moments and RNG states) make
    an interrupted run resumable; a resumed run reproduces the uninterrupted
    one bit-exactly.
    """
    if len(dataset) == 0:
        raise ShapeError("training dataset is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    latest_ckpt = out_dir / "latest.prck"
    state_path = out_dir / "latest.state"
    metrics_path = out_dir / "metrics.jsonl"

    torch.manual_seed(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    network = build_network(model_config, model_type, seed=train_config.seed)
    optimizer = make_optimizer(network, train_config)
    start_step = 0
    if resume:
        if not latest_ckpt.exists() or not state_path.exists():
            raise FileNotFoundError(f"cannot resume: missing {latest_ckpt} or {state_path}")
        params, _, _ = load_checkpoint(latest_ckpt)
        load_network_parameters(network, params)
        state = torch.load(state_path, weights_only=False)
        optimizer.load_state_dict(state["optimizer"])
        rng.bit_generator.state = state["numpy_rng"]
        torch.set_rng_state(state["torch_rng"])
        start_step = state["step"]

    def write_checkpoint(step: int) -> None:
        tmp = latest_ckpt.with_suffix(".tmp")
        save_checkpoint(network_parameters_numpy(network), model_config, tmp, model_type)
        os.replace(tmp, latest_ckpt)
        torch.save(
            {
                "optimizer": optimizer.state_dict(),
                "numpy_rng": rng.bit_generator.state,
                "torch_rng": torch.get_rng_state(),
                "step": step,
            },
            state_path,
        )

    metrics: list[dict] = []
    started = time.monotonic()
    with open(metrics_path, "a") as log:
        for step in range(start_step + 1, train_config.epochs + 1):
            n_effectors = int(rng.integers(train_config.n_effectors_min,
                                           train_config.n_effectors_max + 1))
            frames = rng.integers(0, len(dataset), size=train_config.batch_size)
            items = [
                prepare_batch_item(dataset.pose(int(f)), skeleton, rng,
                                   train_config, n_effectors)
                for f in frames
            ]
            breakdown = training_step(items, network, skeleton, optimizer, train_config)
            if step % train_config.log_interval == 0 or step == train_config.epochs:
                record = {"step": step, **breakdown.to_dict(),
                          "wall_time_s": time.monotonic() - started}
                metrics.append(record)
                log.write(json.dumps(record) + "\n")
                log.flush()
            if step % train_config.checkpoint_interval == 0 or step == train_config.epochs:
                write_checkpoint(step)
    if train_config.epochs == 0 or start_step >= train_config.epochs:
        write_checkpoint(start_step)
    return TrainResult(latest_ckpt, metrics, network)
