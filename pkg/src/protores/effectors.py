"""Effector representation, centering, tolerance/noise/weight maps and sampling.

An effector is one sparse constraint on one joint. Its 6-vector payload is
type-dependent: position effectors carry xyz plus three zeros, rotation
effectors the two-column 6D form of the global rotation, look-at effectors a
target point followed by a unit local facing direction.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DomainError, ShapeError
from .kinematics import euler_to_matrix, matrix_to_rotation6d
from .skeleton import SkeletonSpec
from .validation import as_float_array, check_in_range


class EffectorType(enum.IntEnum):
    POSITION = 0
    ROTATION = 1
    LOOKAT = 2

    @classmethod
    def from_name(cls, name: str) -> "EffectorType":
        try:
            return _TYPE_BY_NAME[name.lower()]
        except KeyError:
            raise DomainError(f"unknown effector type {name!r}") from None

    @property
    def label(self) -> str:
        return _NAME_BY_TYPE[self]


_TYPE_BY_NAME = {
    "position": EffectorType.POSITION,
    "rotation": EffectorType.ROTATION,
    "lookat": EffectorType.LOOKAT,
}
_NAME_BY_TYPE = {v: k for k, v in _TYPE_BY_NAME.items()}


@dataclass
class Effector:
    joint_id: int
    etype: EffectorType
    data: np.ndarray  # (6,)
    tolerance: float = 0.0

    def __post_init__(self):
        self.joint_id = int(self.joint_id)
        self.etype = EffectorType(self.etype)
        self.data = as_float_array(self.data, "effector data", (6,))
        self.tolerance = check_in_range(self.tolerance, 0.0, 1.0, "tolerance")

    def validate(self) -> "Effector":
        if self.etype == EffectorType.POSITION and np.any(self.data[3:6] != 0.0):
            raise DomainError("position effector must have zeros in data[3:6]")
        if self.etype == EffectorType.LOOKAT:
            norm = float(np.linalg.norm(self.data[3:6]))
            if abs(norm - 1.0) > 1e-4:
                raise DomainError(
                    f"look-at direction must be unit length, got norm {norm:.6f}"
                )
        return self


@dataclass
class EffectorSet:
    """Variable-length list of effectors bound to a skeleton."""

    effectors: list[Effector]
    skeleton: SkeletonSpec | None = None

    def __post_init__(self):
        if not self.effectors:
            raise DomainError("effector set must contain at least one effector")
        seen = set()
        for e in self.effectors:
            key = (e.joint_id, int(e.etype))
            if key in seen:
                raise DomainError(
                    f"duplicate effector for joint {e.joint_id} with type {e.etype.label}"
                )
            seen.add(key)
        if self.skeleton is not None:
            for e in self.effectors:
                if not 0 <= e.joint_id < self.skeleton.joint_count:
                    raise ShapeError(
                        f"effector joint id {e.joint_id} out of range "
                        f"[0, {self.skeleton.joint_count})"
                    )

    def __len__(self) -> int:
        return len(self.effectors)

    def validate(self) -> "EffectorSet":
        for e in self.effectors:
            e.validate()
        return self

    # array views used by the model and the noise pipeline
    def data_matrix(self) -> np.ndarray:
        return np.stack([e.data for e in self.effectors])

    def tolerances(self) -> np.ndarray:
        return np.array([e.tolerance for e in self.effectors])

    def joint_ids(self) -> np.ndarray:
        return np.array([e.joint_id for e in self.effectors], dtype=np.int64)

    def types(self) -> np.ndarray:
        return np.array([int(e.etype) for e in self.effectors], dtype=np.int64)


@dataclass
class CenteredEffectorSet:
    """Effector set with position-like coordinates re-referenced to their centroid."""

    effectors: list[Effector]
    centroid: np.ndarray  # (3,)
    skeleton: SkeletonSpec | None = None

    def data_matrix(self) -> np.ndarray:
        return np.stack([e.data for e in self.effectors])

    def tolerances(self) -> np.ndarray:
        return np.array([e.tolerance for e in self.effectors])

    def joint_ids(self) -> np.ndarray:
        return np.array([e.joint_id for e in self.effectors], dtype=np.int64)

    def types(self) -> np.ndarray:
        return np.array([int(e.etype) for e in self.effectors], dtype=np.int64)


def center_effectors(effector_set: EffectorSet) -> CenteredEffectorSet:
    """Subtract the positional-effector centroid from all position-like coordinates.

    The centroid is the mean of positional effector coordinates (the origin
    when there are none). Position data and look-at targets are shifted;
    rotation data and look-at directions are translation-free and untouched.
    """
    positions = [e.data[0:3] for e in effector_set.effectors if e.etype == EffectorType.POSITION]
    centroid = np.mean(positions, axis=0) if positions else np.zeros(3)
    centered = []
    for e in effector_set.effectors:
        if e.etype in (EffectorType.POSITION, EffectorType.LOOKAT):
            data = e.data.copy()
            data[0:3] -= centroid
            centered.append(replace(e, data=data))
        else:
            centered.append(replace(e, data=e.data.copy()))
    return CenteredEffectorSet(centered, centroid, effector_set.skeleton)


# ---------------------------------------------------------------------------
# Tolerance maps
# ---------------------------------------------------------------------------

def tolerance_to_noise_std(tolerance: float, sigma_max: float, eta: float) -> float:
    """Noise standard deviation sigma_max * tolerance**eta."""
    tolerance = check_in_range(tolerance, 0.0, 1.0, "tolerance")
    return float(sigma_max) * tolerance ** float(eta)


def tolerance_to_weight(sigma: float, w_max: float) -> float:
    """Loss weight min(w_max, 1/sigma); the cap applies whenever sigma < 1/w_max."""
    sigma = float(sigma)
    w_max = float(w_max)
    if sigma < 1.0 / w_max:
        return w_max
    return min(w_max, 1.0 / sigma)


# ---------------------------------------------------------------------------
# Sampling and noise models
# ---------------------------------------------------------------------------

def sample_effector_set(
    rng: np.random.Generator,
    skeleton: SkeletonSpec,
    n_range: tuple[int, int],
) -> list[tuple[int, EffectorType]]:
    """Draw N ~ uniform over n_range distinct (joint, type) pairs from the J x 3 grid."""
    n_min, n_max = int(n_range[0]), int(n_range[1])
    n_pairs = skeleton.joint_count * 3
    if not (1 <= n_min <= n_max <= n_pairs):
        raise ConfigError(
            f"effector count range [{n_min}, {n_max}] infeasible for "
            f"{skeleton.joint_count} joints ({n_pairs} pairs)"
        )
    n = int(rng.integers(n_min, n_max + 1))
    flat = rng.choice(n_pairs, size=n, replace=False)
    return [(int(k) // 3, EffectorType(int(k) % 3)) for k in flat]


def _sigma_column(sigma, leading_shape: tuple[int, ...]) -> np.ndarray:
    """Broadcast scalar or per-row sigma to a trailing singleton column."""
    return np.broadcast_to(np.asarray(sigma, dtype=np.float64), leading_shape)[..., None]


def corrupt_position_effector(g, sigma, rng: np.random.Generator) -> np.ndarray:
    """Position payload: ground truth plus isotropic Gaussian noise, zero-padded.

    Vectorized over leading dims of g: (..., 3) -> (..., 6); sigma may be a
    scalar or match the leading dims.
    """
    g = np.asarray(g, dtype=np.float64)
    noisy = g + _sigma_column(sigma, g.shape[:-1]) * rng.standard_normal(g.shape)
    return np.concatenate([noisy, np.zeros_like(noisy)], axis=-1)


def corrupt_rotation_effector(g13, sigma, rng: np.random.Generator) -> np.ndarray:
    """Rotation payload: Euler-perturbed global rotation in two-column 6D form.

    A random Euler triple ~ N(0, sigma^2 I) becomes a rotation matrix which
    pre-multiplies the ground truth, so the output always reconstructs to a
    valid rotation.
    """
    g13 = np.asarray(g13, dtype=np.float64)
    leading = g13.shape[:-2]
    eps = _sigma_column(sigma, leading) * rng.standard_normal(leading + (3,))
    psi = euler_to_matrix(torch.from_numpy(eps)).numpy()
    perturbed = psi @ g13
    return matrix_to_rotation6d(torch.from_numpy(perturbed)).numpy()


def generate_lookat_effector(g, g13, sigma, rng: np.random.Generator,
                             distance_std: float = 5.0) -> np.ndarray:
    """Look-at payload: sampled target along the rotated local direction, plus the direction.

    The local direction is uniform on the sphere; the distance is a folded
    normal |N(0, distance_std)|; the target is displaced by sigma-scaled noise.
    """
    g = np.asarray(g, dtype=np.float64)
    g13 = np.asarray(g13, dtype=np.float64)
    d = rng.standard_normal(g.shape)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    dist = np.abs(rng.normal(0.0, distance_std, size=g.shape[:-1] + (1,)))
    world_dir = np.einsum("...ij,...j->...i", g13, d)
    target = g + dist * world_dir \
        + _sigma_column(sigma, g.shape[:-1]) * rng.standard_normal(g.shape)
    return np.concatenate([target, d], axis=-1)


# ---------------------------------------------------------------------------
# Network input encoding
# ---------------------------------------------------------------------------

def encode_effector_inputs(
    centered: CenteredEffectorSet,
    joint_embedding: torch.Tensor,
    type_embedding: torch.Tensor,
) -> torch.Tensor:
    """Concatenate payload, tolerance and embeddings into the N x (7 + 2*d_e) input."""
    joint_ids = torch.from_numpy(centered.joint_ids())
    types = torch.from_numpy(centered.types())
    if int(joint_ids.max()) >= joint_embedding.shape[0]:
        raise ShapeError(
            f"joint id {int(joint_ids.max())} out of range for embedding table "
            f"of size {joint_embedding.shape[0]}"
        )
    dtype = joint_embedding.dtype
    data = torch.as_tensor(centered.data_matrix(), dtype=dtype)
    tol = torch.as_tensor(centered.tolerances(), dtype=dtype).unsqueeze(-1)
    return torch.cat([data, tol, joint_embedding[joint_ids], type_embedding[types]], dim=-1)


# ---------------------------------------------------------------------------
# Interchange format
# ---------------------------------------------------------------------------

def effector_to_dict(e: Effector, skeleton: SkeletonSpec | None = None) -> dict:
    joint = skeleton.names[e.joint_id] if skeleton is not None else e.joint_id
    return {
        "joint": joint,
        "type": e.etype.label,
        "data": [float(v) for v in e.data],
        "tolerance": float(e.tolerance),
    }


def effector_from_dict(entry: dict, skeleton: SkeletonSpec | None = None) -> Effector:
    try:
        joint_ref = entry["joint"]
        etype = EffectorType.from_name(entry["type"]) if isinstance(entry["type"], str) \
            else EffectorType(int(entry["type"]))
        data = entry["data"]
        tolerance = float(entry.get("tolerance", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed effector record: {exc}") from exc
    if isinstance(joint_ref, str):
        if skeleton is None:
            raise DomainError(f"effector names joint {joint_ref!r} but no skeleton was given")
        joint_id = skeleton.resolve_joint(joint_ref)
    else:
        joint_id = int(joint_ref)
    return Effector(joint_id=joint_id, etype=etype, data=data, tolerance=tolerance)


def effector_set_to_dict(effector_set: EffectorSet, use_names: bool = True) -> dict:
    skeleton = effector_set.skeleton if use_names else None
    return {"effectors": [effector_to_dict(e, skeleton) for e in effector_set.effectors]}


def effector_set_from_dict(data: dict, skeleton: SkeletonSpec | None = None) -> EffectorSet:
    entries = data.get("effectors")
    if not isinstance(entries, list) or not entries:
        raise DomainError("effector document must contain a non-empty 'effectors' list")
    effectors = [effector_from_dict(entry, skeleton) for entry in entries]
    return EffectorSet(effectors, skeleton)


def save_effector_set(effector_set: EffectorSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(effector_set_to_dict(effector_set), indent=2) + "\n")


def load_effector_set(path: str | Path, skeleton: SkeletonSpec | None = None) -> EffectorSet:
    return effector_set_from_dict(json.loads(Path(path).read_text()), skeleton)
