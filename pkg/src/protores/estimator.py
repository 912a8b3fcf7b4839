"""Scikit-learn style facade over the training engine and solver.

ProtoResIK fits the pose-reconstruction network on a PoseDataset and predicts
full poses from effector sets, exposing get_params/set_params so it composes
with the wider estimator ecosystem.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig
from .dataset import PoseDataset
from .effectors import EffectorSet
from .errors import ShapeError
from .kinematics import Pose, matrix_to_quaternion
from .model import build_network, model_forward, network_parameters_numpy
from .skeleton import SkeletonSpec
from .training import train


class ProtoResIK(BaseEstimator):
    """Learned inverse kinematics: fit on poses, predict poses from effectors.

    Parameters mirror the model and training configuration; `fit` expects a
    PoseDataset (or an object exposing `.pose(i)`, `.skeleton`, `__len__`).
    """

    def __init__(self, width: int = 256, encoder_blocks: int = 3, gpd_blocks: int = 3,
                 ikd_blocks: int = 3, layers_per_block: int = 3, embedding_dim: int = 32,
                 dropout: float = 0.01, encoder_variant: str = "psa",
                 model_type: str = "protores", epochs: int = 1000, batch_size: int = 32,
                 learning_rate: float = 2e-4, w_pos: float = 1e2, sigma_max: float = 0.1,
                 w_max: float = 1e3, eta: float = 13.0, n_effectors_min: int = 3,
                 n_effectors_max: int = 16, augment_mirror: bool = True,
                 augment_rotate_y: bool = True, seed: int = 0,
                 work_dir: str | None = None):
        self.width = width
        self.encoder_blocks = encoder_blocks
        self.gpd_blocks = gpd_blocks
        self.ikd_blocks = ikd_blocks
        self.layers_per_block = layers_per_block
        self.embedding_dim = embedding_dim
        self.dropout = dropout
        self.encoder_variant = encoder_variant
        self.model_type = model_type
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.w_pos = w_pos
        self.sigma_max = sigma_max
        self.w_max = w_max
        self.eta = eta
        self.n_effectors_min = n_effectors_min
        self.n_effectors_max = n_effectors_max
        self.augment_mirror = augment_mirror
        self.augment_rotate_y = augment_rotate_y
        self.seed = seed
        self.work_dir = work_dir

    def _model_config(self, joint_count: int) -> ModelConfig:
        return ModelConfig(
            joint_count=joint_count,
            width=self.width,
            encoder_blocks=self.encoder_blocks,
            gpd_blocks=self.gpd_blocks,
            ikd_blocks=self.ikd_blocks,
            layers_per_block=self.layers_per_block,
            embedding_dim=self.embedding_dim,
            dropout=self.dropout,
            encoder_variant=self.encoder_variant,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            w_pos=self.w_pos,
            sigma_max_position=self.sigma_max,
            sigma_max_rotation=self.sigma_max,
            sigma_max_lookat=self.sigma_max,
            w_max=self.w_max,
            eta=self.eta,
            n_effectors_min=self.n_effectors_min,
            n_effectors_max=self.n_effectors_max,
            augment_mirror=self.augment_mirror,
            augment_rotate_y=self.augment_rotate_y,
            seed=self.seed,
        )

    def fit(self, X: PoseDataset, y=None) -> "ProtoResIK":
        if not isinstance(X, PoseDataset):
            raise ShapeError("fit expects a PoseDataset")
        import tempfile

        self.skeleton_ = X.skeleton
        model_config = self._model_config(X.skeleton.joint_count)
        if self.work_dir is not None:
            out_dir = Path(self.work_dir)
            result = train(X, X.skeleton, model_config, self._train_config(),
                           out_dir, model_type=self.model_type)
        else:
            with tempfile.TemporaryDirectory() as tmp:
                result = train(X, X.skeleton, model_config, self._train_config(),
                               tmp, model_type=self.model_type)
        self.network_ = result.network
        self.model_config_ = model_config
        self.training_metrics_ = result.metrics
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("this ProtoResIK instance is not fitted yet")

    def predict(self, X: EffectorSet | list[EffectorSet]) -> Pose | list[Pose]:
        """Solve one effector set (or a list of them) into full poses."""
        self._check_fitted()
        single = isinstance(X, EffectorSet)
        sets = [X] if single else list(X)
        poses = []
        for effector_set in sets:
            effector_set.validate()
            output = model_forward(effector_set, self.skeleton_, self.network_, mode="eval")
            quats = matrix_to_quaternion(output.local_rotations[0].numpy())
            root = output.draft_positions[0, 0].numpy().astype(np.float64)
            poses.append(Pose(root, quats))
        return poses[0] if single else poses

    def predict_transforms(self, X: EffectorSet):
        """Full forward output (draft, rotations, world transforms) for one set."""
        self._check_fitted()
        X.validate()
        return model_forward(X, self.skeleton_, self.network_, mode="eval")

    def score(self, X: PoseDataset, y=None, seed: int = 0) -> float:
        """Negative summed post-FK position error on a random benchmark of X."""
        self._check_fitted()
        from .benchmark import evaluate_model, generate_random_benchmark, network_solver

        files = generate_random_benchmark(X, self.skeleton_, seed=seed)
        report = evaluate_model(network_solver(self.network_, self.skeleton_),
                                files, self.skeleton_)
        return -report.ikd_l2

    def save(self, path: str | Path) -> None:
        self._check_fitted()
        save_checkpoint(network_parameters_numpy(self.network_), self.model_config_,
                        path, self.model_type)

    @classmethod
    def from_checkpoint(cls, path: str | Path, skeleton: SkeletonSpec) -> "ProtoResIK":
        params, config, model_type = load_checkpoint(path)
        estimator = cls(width=config.width, encoder_blocks=config.encoder_blocks,
                        gpd_blocks=config.gpd_blocks, ikd_blocks=config.ikd_blocks,
                        layers_per_block=config.layers_per_block,
                        embedding_dim=config.embedding_dim, dropout=config.dropout,
                        encoder_variant=config.encoder_variant, model_type=model_type)
        network = build_network(config, model_type)
        from .model import load_network_parameters

        load_network_parameters(network, params)
        network.train(False)
        estimator.network_ = network
        estimator.model_config_ = config
        estimator.skeleton_ = skeleton
        estimator.training_metrics_ = []
        if skeleton.joint_count != config.joint_count:
            raise ShapeError(
                f"checkpoint built for {config.joint_count} joints, "
                f"skeleton has {skeleton.joint_count}"
            )
        return estimator
