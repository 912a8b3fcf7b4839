"""Full-body pose reconstruction from sparse, variable effector constraints."""

from .config import MCDC, PSA, ModelConfig, TrainConfig
from .effectors import (
    CenteredEffectorSet,
    Effector,
    EffectorSet,
    EffectorType,
    center_effectors,
    tolerance_to_noise_std,
    tolerance_to_weight,
)
from .errors import ProtoResError
from .kinematics import (
    GlobalTransforms,
    Pose,
    forward_kinematics,
    geodesic_distance,
    l2_error,
    lookat_error,
    mirror_pose,
    rotate_pose_about_y,
    rotation6d_to_matrix,
)
from .model import MaskedFCRNetwork, ProtoResNetwork, model_forward
from .skeleton import Joint, SkeletonSpec

__version__ = "0.1.0"

__all__ = [
    "MCDC",
    "PSA",
    "ModelConfig",
    "TrainConfig",
    "CenteredEffectorSet",
    "Effector",
    "EffectorSet",
    "EffectorType",
    "center_effectors",
    "tolerance_to_noise_std",
    "tolerance_to_weight",
    "ProtoResError",
    "GlobalTransforms",
    "Pose",
    "forward_kinematics",
    "geodesic_distance",
    "l2_error",
    "lookat_error",
    "mirror_pose",
    "rotate_pose_about_y",
    "rotation6d_to_matrix",
    "MaskedFCRNetwork",
    "ProtoResNetwork",
    "model_forward",
    "Joint",
    "SkeletonSpec",
]
