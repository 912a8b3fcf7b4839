"""Rotation algebra, skeleton forward kinematics, error functions and pose augmentations.

All tensor functions are batch-vectorized over leading dimensions and accept
torch tensors or array-likes. They are differentiable where that matters
(6D reconstruction, FK, the three error functions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import DegenerateLookAt, DegenerateRotation, ShapeError, SkeletonError
from .skeleton import SkeletonSpec
from .validation import as_float_array, check_unit_quaternions

EPS_DEGENERATE = 1e-8
EPS_ARCCOS = 1e-7  # keeps arccos gradients finite at +/-1


# ---------------------------------------------------------------------------
# Rotation representations
# ---------------------------------------------------------------------------

def rotation6d_to_matrix(r6, strict: bool = True) -> torch.Tensor:
    """Reconstruct rotation matrices from the two-column 6D representation.

    Input layout is (first column, second column). The result's columns are
    built by normalize-cross-cross: x = unit(c1), z = unit(x × c2), y = z × x.

    With strict=True, zero-norm or parallel inputs raise DegenerateRotation.
    With strict=False (network forward pass), norms are regularized by adding
    a small epsilon so the output stays finite for arbitrary inputs.
    """
    r6 = torch.as_tensor(r6)
    if r6.shape[-1] != 6:
        raise ShapeError(f"6D rotation input must have last dim 6, got {tuple(r6.shape)}")
    a1 = r6[..., 0:3]
    a2 = r6[..., 3:6]
    n1 = torch.linalg.norm(a1, dim=-1, keepdim=True)
    if strict and bool((n1 <= EPS_DEGENERATE).any()):
        raise DegenerateRotation(
            "first 6D vector has (near-)zero norm", norm=float(n1.min())
        )
    rx = a1 / (n1 if strict else n1 + EPS_DEGENERATE)
    cross = torch.cross(rx, a2, dim=-1)
    nc = torch.linalg.norm(cross, dim=-1, keepdim=True)
    if strict and bool((nc <= EPS_DEGENERATE).any()):
        raise DegenerateRotation(
            "6D vectors are (near-)parallel", norm=float(nc.min())
        )
    rz = cross / (nc if strict else nc + EPS_DEGENERATE)
    ry = torch.cross(rz, rx, dim=-1)
    return torch.stack((rx, ry, rz), dim=-1)


def matrix_to_rotation6d(matrix) -> torch.Tensor:
    """First two columns of a rotation matrix, flattened to a 6-vector."""
    matrix = torch.as_tensor(matrix)
    if matrix.shape[-2:] != (3, 3):
        raise ShapeError(f"rotation matrix must be (..., 3, 3), got {tuple(matrix.shape)}")
    return torch.cat((matrix[..., :, 0], matrix[..., :, 1]), dim=-1)


def euler_to_matrix(angles) -> torch.Tensor:
    """Rotation matrix Z(a) @ Y(b) @ X(g) for angles (a, b, g) in radians."""
    angles = torch.as_tensor(angles)
    if angles.shape[-1] != 3:
        raise ShapeError(f"euler angles must have last dim 3, got {tuple(angles.shape)}")
    a, b, g = angles[..., 0], angles[..., 1], angles[..., 2]
    ca, sa = torch.cos(a), torch.sin(a)
    cb, sb = torch.cos(b), torch.sin(b)
    cg, sg = torch.cos(g), torch.sin(g)
    zero = torch.zeros_like(a)
    one = torch.ones_like(a)
    rz = torch.stack(
        (ca, -sa, zero, sa, ca, zero, zero, zero, one), dim=-1
    ).reshape(*a.shape, 3, 3)
    ry = torch.stack(
        (cb, zero, sb, zero, one, zero, -sb, zero, cb), dim=-1
    ).reshape(*a.shape, 3, 3)
    rx = torch.stack(
        (one, zero, zero, zero, cg, -sg, zero, sg, cg), dim=-1
    ).reshape(*a.shape, 3, 3)
    return rz @ ry @ rx


def quaternion_to_matrix(q) -> torch.Tensor:
    """Rotation matrix from a unit quaternion in (x, y, z, w) order.

    Renormalizes internally; q and -q map to the same matrix. A zero
    quaternion raises DegenerateRotation.
    """
    q = torch.as_tensor(q)
    if q.shape[-1] != 4:
        raise ShapeError(f"quaternion must have last dim 4, got {tuple(q.shape)}")
    norm = torch.linalg.norm(q, dim=-1, keepdim=True)
    if bool((norm <= EPS_DEGENERATE).any()):
        raise DegenerateRotation("zero quaternion", norm=float(norm.min()))
    x, y, z, w = torch.unbind(q / norm, dim=-1)
    row0 = torch.stack((1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)), dim=-1)
    row1 = torch.stack((2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)), dim=-1)
    row2 = torch.stack((2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)), dim=-1)
    return torch.stack((row0, row1, row2), dim=-2)


def matrix_to_quaternion(matrix) -> np.ndarray:
    """Unit quaternion (x, y, z, w) with w >= 0 from rotation matrices."""
    m = np.asarray(torch.as_tensor(matrix).detach().cpu().numpy() if torch.is_tensor(matrix) else matrix,
                   dtype=np.float64)
    if m.shape[-2:] != (3, 3):
        raise ShapeError(f"rotation matrix must be (..., 3, 3), got {m.shape}")
    batch = m.shape[:-2]
    m = m.reshape(-1, 3, 3)
    q = np.empty((m.shape[0], 4), dtype=np.float64)
    # Shepperd's method: branch on the largest of trace / diagonal entries.
    t = np.einsum("nii->n", m)
    for n in range(m.shape[0]):
        r = m[n]
        if t[n] > 0:
            s = np.sqrt(t[n] + 1.0) * 2
            q[n] = [(r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s, 0.25 * s]
        elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
            q[n] = [0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s, (r[2, 1] - r[1, 2]) / s]
        elif r[1, 1] >= r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
            q[n] = [(r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s, (r[0, 2] - r[2, 0]) / s]
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
            q[n] = [(r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s, (r[1, 0] - r[0, 1]) / s]
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    flip = q[:, 3] < 0
    q[flip] = -q[flip]
    return q.reshape(*batch, 4)


def quaternion_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product in (x, y, z, w) order; composes like R(q1) @ R(q2)."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    x1, y1, z1, w1 = q1[..., 0], q1[..., 1], q1[..., 2], q1[..., 3]
    x2, y2, z2, w2 = q2[..., 0], q2[..., 1], q2[..., 2], q2[..., 3]
    return np.stack(
        (
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        ),
        axis=-1,
    )


def random_unit_quaternions(rng: np.random.Generator, shape: tuple[int, ...] = ()) -> np.ndarray:
    """Uniform random rotations as (x, y, z, w) quaternions."""
    q = rng.standard_normal(shape + (4,))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Pose and forward kinematics
# ---------------------------------------------------------------------------

@dataclass
class Pose:
    """Root global position plus one local rotation quaternion (x,y,z,w) per joint."""

    root_position: np.ndarray  # (3,)
    joint_rotations: np.ndarray  # (J, 4)

    def __post_init__(self):
        self.root_position = as_float_array(self.root_position, "root_position", (3,))
        self.joint_rotations = as_float_array(self.joint_rotations, "joint_rotations")
        if self.joint_rotations.ndim != 2 or self.joint_rotations.shape[1] != 4:
            raise ShapeError(
                f"joint_rotations must be (J, 4), got {self.joint_rotations.shape}"
            )

    @property
    def joint_count(self) -> int:
        return self.joint_rotations.shape[0]

    def validate(self, skeleton: SkeletonSpec, quat_tol: float = 1e-6) -> "Pose":
        if self.joint_count != skeleton.joint_count:
            raise ShapeError(
                f"pose has {self.joint_count} rotations, skeleton has {skeleton.joint_count} joints"
            )
        check_unit_quaternions(self.joint_rotations, tol=quat_tol)
        return self

    def local_matrices(self) -> torch.Tensor:
        return quaternion_to_matrix(torch.from_numpy(self.joint_rotations))

    @classmethod
    def identity(cls, joint_count: int) -> "Pose":
        quats = np.zeros((joint_count, 4))
        quats[:, 3] = 1.0
        return cls(np.zeros(3), quats)


@dataclass
class GlobalTransforms:
    """Per-joint global rotation matrices and global positions."""

    rotations: torch.Tensor  # (..., J, 3, 3)
    positions: torch.Tensor  # (..., J, 3)

    def numpy(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            self.rotations.detach().cpu().numpy(),
            self.positions.detach().cpu().numpy(),
        )


def forward_kinematics(skeleton: SkeletonSpec, root_position, local_rotations) -> GlobalTransforms:
    """Accumulate global transforms down the joint tree.

    root_position: (..., 3); local_rotations: (..., J, 3, 3) as matrices.
    The root's global transform is [R_root | root_position]; every other
    joint composes its parent's transform with its fixed offset and local
    rotation, so bone lengths are preserved by construction.
    """
    rot = torch.as_tensor(local_rotations)
    pos = torch.as_tensor(root_position, dtype=rot.dtype)
    if rot.shape[-3] != skeleton.joint_count:
        raise ShapeError(
            f"expected {skeleton.joint_count} local rotations, got {rot.shape[-3]}"
        )
    if rot.shape[-2:] != (3, 3) or pos.shape[-1] != 3:
        raise ShapeError("local_rotations must be (..., J, 3, 3) and root_position (..., 3)")
    offsets = torch.as_tensor(skeleton.offsets, dtype=rot.dtype)
    global_rot: list[torch.Tensor] = []
    global_pos: list[torch.Tensor] = []
    for j in range(skeleton.joint_count):
        parent = int(skeleton.parents[j])
        if parent < 0:
            global_rot.append(rot[..., j, :, :])
            global_pos.append(pos)
        else:
            gr = global_rot[parent]
            global_rot.append(gr @ rot[..., j, :, :])
            global_pos.append(global_pos[parent] + torch.matmul(gr, offsets[j]))
    return GlobalTransforms(
        rotations=torch.stack(global_rot, dim=-3),
        positions=torch.stack(global_pos, dim=-2),
    )


def fk_pose(skeleton: SkeletonSpec, pose: Pose) -> GlobalTransforms:
    """Forward kinematics of a quaternion-stored pose."""
    return forward_kinematics(
        skeleton, torch.from_numpy(pose.root_position), pose.local_matrices()
    )


# ---------------------------------------------------------------------------
# Error functions
# ---------------------------------------------------------------------------

def l2_error(y, y_hat) -> float:
    """Sum of squared differences between two equal-length vectors."""
    y = torch.as_tensor(y, dtype=torch.float64).reshape(-1)
    y_hat = torch.as_tensor(y_hat, dtype=torch.float64).reshape(-1)
    if y.shape != y_hat.shape:
        raise ShapeError(f"length mismatch: {tuple(y.shape)} vs {tuple(y_hat.shape)}")
    return float(torch.sum((y - y_hat) ** 2))


def squared_distance(y: torch.Tensor, y_hat: torch.Tensor) -> torch.Tensor:
    """Batched sum of squared differences over the last axis (differentiable)."""
    return torch.sum((y - y_hat) ** 2, dim=-1)


def geodesic_distance(r, r_hat, eps_clamp: float = EPS_ARCCOS) -> torch.Tensor:
    """Smallest rotation angle (radians) between two rotation matrices.

    arccos[(tr(r_hat^T r) - 1) / 2], the argument clamped to
    [-1 + eps_clamp, 1 - eps_clamp]. The default epsilon keeps gradients
    finite during training; pass eps_clamp=0 for an exact metric.
    """
    r = torch.as_tensor(r)
    r_hat = torch.as_tensor(r_hat)
    if r.shape[-2:] != (3, 3) or r_hat.shape[-2:] != (3, 3):
        raise ShapeError("geodesic_distance expects (..., 3, 3) rotation matrices")
    trace = torch.sum(r_hat * r, dim=(-2, -1))  # tr(r_hat^T r)
    cos = torch.clamp((trace - 1.0) / 2.0, -1.0 + eps_clamp, 1.0 - eps_clamp)
    return torch.arccos(cos)


def lookat_error(target, direction, joint_rotation, joint_position,
                 eps_clamp: float = EPS_ARCCOS, strict: bool = True) -> torch.Tensor:
    """Angle between the ray joint->target and the joint's rotated local direction.

    arccos[unit(target - position) . (rotation @ unit(direction))] with the
    same clamp as geodesic_distance. strict=True raises DegenerateLookAt when
    the target coincides with the joint or the direction is zero; strict=False
    regularizes the norms instead (training path).
    """
    target = torch.as_tensor(target)
    direction = torch.as_tensor(direction, dtype=target.dtype)
    joint_rotation = torch.as_tensor(joint_rotation, dtype=target.dtype)
    joint_position = torch.as_tensor(joint_position, dtype=target.dtype)
    ray = target - joint_position
    ray_norm = torch.linalg.norm(ray, dim=-1, keepdim=True)
    dir_norm = torch.linalg.norm(direction, dim=-1, keepdim=True)
    if strict:
        if bool((ray_norm <= EPS_DEGENERATE).any()):
            raise DegenerateLookAt("look-at target coincides with the joint position")
        if bool((dir_norm <= EPS_DEGENERATE).any()):
            raise DegenerateLookAt("look-at direction has zero length")
        ray = ray / ray_norm
        direction = direction / dir_norm
    else:
        ray = ray / (ray_norm + EPS_DEGENERATE)
        direction = direction / (dir_norm + EPS_DEGENERATE)
    facing = torch.matmul(joint_rotation, direction.unsqueeze(-1)).squeeze(-1)
    cos = torch.clamp(torch.sum(ray * facing, dim=-1), -1.0 + eps_clamp, 1.0 - eps_clamp)
    return torch.arccos(cos)


# ---------------------------------------------------------------------------
# Pose augmentations
# ---------------------------------------------------------------------------

def rotate_pose_about_y(pose: Pose, angle: float) -> Pose:
    """Rotate the whole pose about the global Y axis.

    The root position is rotated and the root's local rotation is
    pre-multiplied by the Y rotation; all other local rotations are relative
    to their parents and stay unchanged.
    """
    angle = float(angle)
    c, s = np.cos(angle), np.sin(angle)
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    qy = np.array([0.0, np.sin(angle / 2.0), 0.0, np.cos(angle / 2.0)])
    rotations = pose.joint_rotations.copy()
    rotations[0] = quaternion_multiply(qy, rotations[0])
    rotations[0] /= np.linalg.norm(rotations[0])
    return Pose(ry @ pose.root_position, rotations)


def mirror_pose(skeleton: SkeletonSpec, pose: Pose) -> Pose:
    """Reflect a pose through the YZ plane using the skeleton's mirror map.

    Each joint's rotation is conjugated by diag(-1, 1, 1) — for quaternions
    (x, y, z, w) -> (x, -y, -z, w) — and reassigned to its mirror joint; the
    root x coordinate is negated. The operation is an involution.
    """
    if pose.joint_count != skeleton.joint_count:
        raise ShapeError(
            f"pose has {pose.joint_count} rotations, skeleton has {skeleton.joint_count} joints"
        )
    if skeleton.mirror_indices is None:
        raise SkeletonError("skeleton has no mirror map")
    reflected = pose.joint_rotations * np.array([1.0, -1.0, -1.0, 1.0])
    rotations = np.empty_like(reflected)
    rotations[skeleton.mirror_indices] = reflected
    root = pose.root_position * np.array([-1.0, 1.0, 1.0])
    return Pose(root, rotations)
