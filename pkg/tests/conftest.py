"""Shared fixtures: test skeletons and synthetic pose datasets."""

import numpy as np
import pytest

from protores.dataset import PoseDataset
from protores.kinematics import quaternion_multiply
from protores.skeleton import Joint, SkeletonSpec


def humanoid_joints() -> list[Joint]:
    """17-joint humanoid with mirror-symmetric offsets and all six zones."""
    return [
        Joint("Hips", None, (0.0, 0.0, 0.0), "Hips", "hips"),
        Joint("Spine", 0, (0.0, 0.12, 0.0), "Spine", "hips"),
        Joint("Chest", 1, (0.0, 0.15, 0.0), "Chest", "hips"),
        Joint("Neck", 2, (0.0, 0.14, 0.0), "Neck", "head"),
        Joint("Head", 3, (0.0, 0.09, 0.0), "Head", "head"),
        Joint("ShoulderLeft", 2, (0.08, 0.1, 0.01), "ShoulderRight", "left-arm"),
        Joint("ForearmLeft", 5, (0.26, 0.0, 0.0), "ForearmRight", "left-arm"),
        Joint("HandLeft", 6, (0.25, 0.0, 0.0), "HandRight", "left-arm"),
        Joint("ShoulderRight", 2, (-0.08, 0.1, 0.01), "ShoulderLeft", "right-arm"),
        Joint("ForearmRight", 8, (-0.26, 0.0, 0.0), "ForearmLeft", "right-arm"),
        Joint("HandRight", 9, (-0.25, 0.0, 0.0), "HandLeft", "right-arm"),
        Joint("ThighLeft", 0, (0.09, -0.05, 0.0), "ThighRight", "left-leg"),
        Joint("CalfLeft", 11, (0.0, -0.4, 0.0), "CalfRight", "left-leg"),
        Joint("FootLeft", 12, (0.0, -0.42, 0.03), "FootRight", "left-leg"),
        Joint("ThighRight", 0, (-0.09, -0.05, 0.0), "ThighLeft", "right-leg"),
        Joint("CalfRight", 14, (0.0, -0.4, 0.0), "CalfLeft", "right-leg"),
        Joint("FootRight", 15, (0.0, -0.42, 0.03), "FootLeft", "right-leg"),
    ]


def tiny_joints() -> list[Joint]:
    """Minimal 5-joint star skeleton, one joint per limb zone."""
    return [
        Joint("Hips", None, (0.0, 0.0, 0.0), "Hips", "hips"),
        Joint("HandLeft", 0, (0.4, 0.5, 0.0), "HandRight", "left-arm"),
        Joint("HandRight", 0, (-0.4, 0.5, 0.0), "HandLeft", "right-arm"),
        Joint("FootLeft", 0, (0.15, -0.8, 0.0), "FootRight", "left-leg"),
        Joint("FootRight", 0, (-0.15, -0.8, 0.0), "FootLeft", "right-leg"),
    ]


def make_skeleton() -> SkeletonSpec:
    return SkeletonSpec(humanoid_joints())


def make_tiny_skeleton() -> SkeletonSpec:
    return SkeletonSpec(tiny_joints())


def small_random_quaternions(rng: np.random.Generator, shape: tuple[int, ...],
                             angle_scale: float = 0.35) -> np.ndarray:
    """Rotations near identity: random axis, angle ~ N(0, angle_scale)."""
    axis = rng.standard_normal(shape + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.normal(0.0, angle_scale, size=shape + (1,))
    return np.concatenate(
        [axis * np.sin(angle / 2.0), np.cos(angle / 2.0)], axis=-1
    )


def mocap_like_joints() -> list[Joint]:
    """17-joint rig shaped like production mocap skeletons: a short torso chain,
    single-bone limbs and many small digit bones."""
    return [
        Joint("Hips", None, (0.0, 0.0, 0.0), "Hips", "hips"),
        Joint("Spine", 0, (0.0, 0.15, 0.0), "Spine", "hips"),
        Joint("Chest", 1, (0.0, 0.18, 0.0), "Chest", "hips"),
        Joint("Neck", 2, (0.0, 0.12, 0.0), "Neck", "head"),
        Joint("Head", 3, (0.0, 0.10, 0.0), "Head", "head"),
        Joint("HandLeft", 2, (0.62, 0.08, 0.0), "HandRight", "left-arm"),
        Joint("ThumbLeft", 5, (0.05, 0.0, 0.03), "ThumbRight", "left-arm"),
        Joint("IndexLeft", 5, (0.09, 0.0, 0.0), "IndexRight", "left-arm"),
        Joint("PinkyLeft", 5, (0.07, 0.0, -0.03), "PinkyRight", "left-arm"),
        Joint("HandRight", 2, (-0.62, 0.08, 0.0), "HandLeft", "right-arm"),
        Joint("ThumbRight", 9, (-0.05, 0.0, 0.03), "ThumbLeft", "right-arm"),
        Joint("IndexRight", 9, (-0.09, 0.0, 0.0), "IndexLeft", "right-arm"),
        Joint("PinkyRight", 9, (-0.07, 0.0, -0.03), "PinkyLeft", "right-arm"),
        Joint("FootLeft", 0, (0.10, -0.85, 0.02), "FootRight", "left-leg"),
        Joint("ToeLeft", 13, (0.0, -0.04, 0.12), "ToeRight", "left-leg"),
        Joint("FootRight", 0, (-0.10, -0.85, 0.02), "FootLeft", "right-leg"),
        Joint("ToeRight", 15, (0.0, -0.04, 0.12), "ToeLeft", "right-leg"),
    ]


def make_mocap_like_skeleton() -> SkeletonSpec:
    return SkeletonSpec(mocap_like_joints())


def make_clip_dataset(skeleton: SkeletonSpec, n_frames: int = 32, seed: int = 400,
                      angle_scale: float = 0.5, span: float = 0.5) -> PoseDataset:
    """Synthetic motion clip: poses interpolate smoothly between two keyposes,
    mirroring how neighboring frames of one mocap clip relate."""
    rng = np.random.default_rng(seed)
    joint_count = skeleton.joint_count
    start = small_random_quaternions(rng, (joint_count,), angle_scale)
    end = small_random_quaternions(rng, (joint_count,), angle_scale)
    flip = np.sum(start * end, axis=-1) < 0
    end[flip] = -end[flip]
    root_a, root_b = rng.normal(0, span, 3), rng.normal(0, span, 3)
    roots, quats = [], []
    for t in np.linspace(0.0, 1.0, n_frames):
        q = (1 - t) * start + t * end
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        quats.append(q)
        roots.append(root_a * (1 - t) + root_b * t + np.array([0.0, 1.0, 0.0]))
    return PoseDataset(skeleton, np.array(roots, dtype=np.float32),
                       np.array(quats, dtype=np.float32))


def make_synthetic_dataset(skeleton: SkeletonSpec, n_frames: int, seed: int = 0,
                           n_clips: int | None = None) -> PoseDataset:
    """Plausible-scale poses: near-identity local rotations, randomly yawed roots."""
    rng = np.random.default_rng(seed)
    joint_count = skeleton.joint_count
    rotations = small_random_quaternions(rng, (n_frames, joint_count))
    yaw = rng.uniform(0.0, 2.0 * np.pi, size=(n_frames, 1))
    yaw_quat = np.concatenate(
        [np.zeros((n_frames, 1)), np.sin(yaw / 2), np.zeros((n_frames, 1)), np.cos(yaw / 2)],
        axis=-1,
    )
    rotations[:, 0] = quaternion_multiply(yaw_quat, rotations[:, 0])
    rotations /= np.linalg.norm(rotations, axis=-1, keepdims=True)
    roots = rng.normal(0.0, 0.5, size=(n_frames, 3))
    roots[:, 1] = np.abs(roots[:, 1]) + 0.8  # roots stay above the ground plane
    clip_index = None
    if n_clips is not None:
        bounds = np.linspace(0, n_frames, n_clips + 1).astype(int)
        clip_index = [
            (f"clip-{i}", int(bounds[i]), int(bounds[i + 1]))
            for i in range(n_clips)
            if bounds[i + 1] > bounds[i]
        ]
    return PoseDataset(skeleton, roots.astype(np.float32),
                       rotations.astype(np.float32), clip_index)


@pytest.fixture(scope="session")
def skeleton() -> SkeletonSpec:
    return make_skeleton()


@pytest.fixture(scope="session")
def tiny_skeleton() -> SkeletonSpec:
    return make_tiny_skeleton()


@pytest.fixture(scope="session")
def small_dataset(skeleton) -> PoseDataset:
    return make_synthetic_dataset(skeleton, 64, seed=7, n_clips=10)
