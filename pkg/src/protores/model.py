"""The pose reconstruction network: residual blocks, set encoders, decoders and FK head.

Two architectures share one calling convention:

  * ProtoResNetwork — prototype-subtract-accumulate (or maxpool-concat) set
    encoder over N effectors, followed by a global position decoder (GPD) and
    an inverse kinematics decoder (IKD) conditioned on the GPD draft.
  * MaskedFCRNetwork — brute-force baseline with one input slot per
    (joint, type) pair, missing slots filled by learnable placeholders.

Both produce (pose_embedding, draft_positions, rotations6d); `run_network`
turns those into world-frame global transforms via forward kinematics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .config import MCDC, PSA, ModelConfig
from .effectors import EffectorSet, center_effectors
from .errors import ConfigError, EmptyInput, NumericalError, ShapeError
from .kinematics import forward_kinematics, rotation6d_to_matrix
from .skeleton import SkeletonSpec


def _init_linear(linear: nn.Linear, generator: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(linear.in_features)
    with torch.no_grad():
        linear.weight.uniform_(-bound, bound, generator=generator)
        linear.bias.uniform_(-bound, bound, generator=generator)


class ResidualBlock(nn.Module):
    """Fully-connected block with a residual output b and optional forward output f.

    h_1 = relu(W_1 x + a_1), ..., h_L likewise; b = relu(L x + h_L); f = F h_L.
    Dropout follows each relu and is active only in training mode.
    """

    def __init__(self, in_width: int, hidden_width: int, out_width: int | None,
                 layers: int, dropout: float):
        super().__init__()
        widths = [in_width] + [hidden_width] * layers
        self.layers = nn.ModuleList(
            nn.Linear(widths[i], widths[i + 1]) for i in range(layers)
        )
        self.residual_proj = nn.Linear(in_width, hidden_width)
        self.forward_proj = nn.Linear(hidden_width, out_width) if out_width else None
        self.dropout = nn.Dropout(dropout)

    def init_parameters(self, generator: torch.Generator) -> None:
        for layer in self.layers:
            _init_linear(layer, generator)
        _init_linear(self.residual_proj, generator)
        if self.forward_proj is not None:
            _init_linear(self.forward_proj, generator)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
        h = x
        for layer in self.layers:
            h = self.dropout(torch.relu(layer(h)))
        b = self.dropout(torch.relu(self.residual_proj(x) + h))
        f = self.forward_proj(h) if self.forward_proj is not None else None
        return b, f


class PSAEncoder(nn.Module):
    """Prototype-subtract-accumulate encoder over the effector axis.

    Block 1 consumes the raw N x E_in input. Every later block r subtracts the
    running prototype scaled by 1/(r-1) from the previous block's residual
    output; each block's forward output is mean-pooled over effectors and
    accumulated into the pose embedding.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        blocks = []
        for r in range(config.encoder_blocks):
            in_width = config.input_width if r == 0 else config.width
            blocks.append(ResidualBlock(in_width, config.width, config.embedding_width,
                                        config.layers_per_block, config.dropout))
        self.blocks = nn.ModuleList(blocks)
        self.embedding_width = config.embedding_width

    def forward(self, x_in: torch.Tensor) -> torch.Tensor:
        if x_in.ndim != 3:
            raise ShapeError(f"encoder input must be (B, N, E_in), got {tuple(x_in.shape)}")
        if x_in.shape[1] == 0:
            raise EmptyInput("encoder received an empty effector set")
        batch = x_in.shape[0]
        p = x_in.new_zeros((batch, self.embedding_width))
        b = x_in
        for r, block in enumerate(self.blocks, start=1):
            x_r = b if r == 1 else torch.relu(b - p.unsqueeze(1) / (r - 1))
            b, f = block(x_r)
            p = p + f.mean(dim=1)
        return p


class MCDCEncoder(nn.Module):
    """Maxpool-concat daisy chain encoder (ablation variant).

    Each block past the first consumes the previous residual output
    concatenated with its row-broadcast maxpool over effectors; the final
    embedding is the maxpool of the last block's residual output. Forward
    projections are unused.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        blocks = []
        for r in range(config.encoder_blocks):
            in_width = config.input_width if r == 0 else 2 * config.width
            blocks.append(ResidualBlock(in_width, config.width, None,
                                        config.layers_per_block, config.dropout))
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x_in: torch.Tensor) -> torch.Tensor:
        if x_in.ndim != 3:
            raise ShapeError(f"encoder input must be (B, N, E_in), got {tuple(x_in.shape)}")
        if x_in.shape[1] == 0:
            raise EmptyInput("encoder received an empty effector set")
        b = x_in
        for r, block in enumerate(self.blocks, start=1):
            if r == 1:
                x_r = b
            else:
                pooled = b.max(dim=1, keepdim=True).values.expand_as(b)
                x_r = torch.cat((b, pooled), dim=-1)
            b, _ = block(x_r)
        return b.max(dim=1).values


class FCRDecoder(nn.Module):
    """Fully-connected residual decoder accumulating forward outputs.

    With zero blocks this degenerates to a single linear projection.
    """

    def __init__(self, in_width: int, width: int, out_width: int,
                 blocks: int, layers: int, dropout: float):
        super().__init__()
        if blocks == 0:
            self.projection = nn.Linear(in_width, out_width)
            self.blocks = nn.ModuleList()
        else:
            self.projection = None
            mods = []
            for r in range(blocks):
                mods.append(ResidualBlock(in_width if r == 0 else width, width,
                                          out_width, layers, dropout))
            self.blocks = nn.ModuleList(mods)

    def init_parameters(self, generator: torch.Generator) -> None:
        if self.projection is not None:
            _init_linear(self.projection, generator)
        for block in self.blocks:
            block.init_parameters(generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.projection is not None:
            return self.projection(x)
        b = x
        f = None
        for block in self.blocks:
            b, f_r = block(b)
            f = f_r if f is None else f + f_r
        return f


class ProtoResNetwork(nn.Module):
    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.joint_embedding = nn.Parameter(
            torch.empty(config.joint_count, config.embedding_dim)
        )
        self.type_embedding = nn.Parameter(torch.empty(3, config.embedding_dim))
        if config.encoder_variant == PSA:
            self.encoder = PSAEncoder(config)
        elif config.encoder_variant == MCDC:
            self.encoder = MCDCEncoder(config)
        else:
            raise ConfigError(f"unknown encoder variant {config.encoder_variant!r}")
        j3 = 3 * config.joint_count
        self.gpd = FCRDecoder(config.embedding_width, config.width, j3,
                              config.gpd_blocks, config.layers_per_block, config.dropout)
        self.ikd = FCRDecoder(config.embedding_width + j3, config.width,
                              6 * config.joint_count, config.ikd_blocks,
                              config.layers_per_block, config.dropout)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        generator = torch.Generator().manual_seed(seed)
        std = 1.0 / math.sqrt(self.config.embedding_dim)  # N(0, 1/d_e) variance
        with torch.no_grad():
            self.joint_embedding.normal_(0.0, std, generator=generator)
            self.type_embedding.normal_(0.0, std, generator=generator)
        for block in self.encoder.blocks:
            block.init_parameters(generator)
        self.gpd.init_parameters(generator)
        self.ikd.init_parameters(generator)

    def encode_inputs(self, data: torch.Tensor, tolerances: torch.Tensor,
                      joint_ids: torch.Tensor, types: torch.Tensor) -> torch.Tensor:
        if int(joint_ids.max()) >= self.config.joint_count:
            raise ShapeError(
                f"joint id {int(joint_ids.max())} out of range for "
                f"{self.config.joint_count} joints"
            )
        return torch.cat(
            (data, tolerances.unsqueeze(-1),
             self.joint_embedding[joint_ids], self.type_embedding[types]),
            dim=-1,
        )

    def forward(self, data: torch.Tensor, tolerances: torch.Tensor,
                joint_ids: torch.Tensor, types: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        x_in = self.encode_inputs(data, tolerances, joint_ids, types)
        embedding = self.encoder(x_in)
        draft = self.gpd(embedding)
        rotations6d = self.ikd(torch.cat((embedding, draft), dim=-1))
        return embedding, draft, rotations6d


class MaskedFCRNetwork(nn.Module):
    """Fixed-width baseline: a J*3*7 input layer covering every (joint, type) slot.

    Present effectors write their 6D payload plus tolerance into their slot;
    every missing slot keeps its own learnable 7-vector placeholder. An FCR
    stack encodes the flattened slots, then the same GPD/IKD head split as
    ProtoResNetwork applies.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.placeholders = nn.Parameter(torch.empty(config.joint_count * 3, 7))
        j3 = 3 * config.joint_count
        self.encoder = FCRDecoder(config.joint_count * 3 * 7, config.width,
                                  config.embedding_width, config.encoder_blocks,
                                  config.layers_per_block, config.dropout)
        self.gpd = FCRDecoder(config.embedding_width, config.width, j3,
                              config.gpd_blocks, config.layers_per_block, config.dropout)
        self.ikd = FCRDecoder(config.embedding_width + j3, config.width,
                              6 * config.joint_count, config.ikd_blocks,
                              config.layers_per_block, config.dropout)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        generator = torch.Generator().manual_seed(seed)
        bound = 1.0 / math.sqrt(7.0)
        with torch.no_grad():
            self.placeholders.uniform_(-bound, bound, generator=generator)
        self.encoder.init_parameters(generator)
        self.gpd.init_parameters(generator)
        self.ikd.init_parameters(generator)

    def forward(self, data: torch.Tensor, tolerances: torch.Tensor,
                joint_ids: torch.Tensor, types: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if data.ndim != 3:
            raise ShapeError(f"expected (B, N, 6) effector data, got {tuple(data.shape)}")
        batch = data.shape[0]
        slots = self.placeholders.unsqueeze(0).expand(batch, -1, -1)
        if joint_ids.numel():  # all-placeholder input is legal and constant
            if int(joint_ids.max()) >= self.config.joint_count:
                raise ShapeError(
                    f"joint id {int(joint_ids.max())} out of range for "
                    f"{self.config.joint_count} joints"
                )
            present = torch.cat((data, tolerances.unsqueeze(-1)), dim=-1)
            slot_index = (joint_ids * 3 + types).unsqueeze(-1).expand(-1, -1, 7)
            slots = slots.scatter(1, slot_index, present)
        embedding = self.encoder(slots.reshape(batch, -1))
        draft = self.gpd(embedding)
        rotations6d = self.ikd(torch.cat((embedding, draft), dim=-1))
        return embedding, draft, rotations6d


# ---------------------------------------------------------------------------
# Full forward pass ending in FK
# ---------------------------------------------------------------------------

@dataclass
class ForwardOutput:
    pose_embedding: torch.Tensor    # (B, E)
    draft_positions: torch.Tensor   # (B, J, 3) world frame
    rotations6d: torch.Tensor       # (B, J, 6)
    local_rotations: torch.Tensor   # (B, J, 3, 3)
    global_rotations: torch.Tensor  # (B, J, 3, 3)
    global_positions: torch.Tensor  # (B, J, 3) world frame
    centroid: torch.Tensor          # (B, 3)


def run_network(network: nn.Module, skeleton: SkeletonSpec,
                data: torch.Tensor, tolerances: torch.Tensor,
                joint_ids: torch.Tensor, types: torch.Tensor,
                centroid: torch.Tensor) -> ForwardOutput:
    """Network heads -> 6D reconstruction -> FK -> world-frame outputs.

    `data` must already be centered; `centroid` is re-added to the draft and
    to the FK positions so the returned frames are world frames. The root
    position for FK comes from the GPD draft.
    """
    joint_count = network.config.joint_count
    embedding, draft, rotations6d = network(data, tolerances, joint_ids, types)
    draft = draft.view(-1, joint_count, 3)
    rotations6d = rotations6d.view(-1, joint_count, 6)
    local = rotation6d_to_matrix(rotations6d, strict=False)
    transforms = forward_kinematics(skeleton, draft[:, 0, :], local)
    shift = centroid.unsqueeze(1)
    return ForwardOutput(
        pose_embedding=embedding,
        draft_positions=draft + shift,
        rotations6d=rotations6d,
        local_rotations=local,
        global_rotations=transforms.rotations,
        global_positions=transforms.positions + shift,
        centroid=centroid,
    )


def model_forward(effector_set: EffectorSet, skeleton: SkeletonSpec,
                  network: nn.Module, mode: str = "eval") -> ForwardOutput:
    """Solve a single effector set: center, encode, decode, FK, un-center."""
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    centered = center_effectors(effector_set)
    dtype = next(network.parameters()).dtype
    data = torch.as_tensor(centered.data_matrix(), dtype=dtype).unsqueeze(0)
    tolerances = torch.as_tensor(centered.tolerances(), dtype=dtype).unsqueeze(0)
    joint_ids = torch.from_numpy(centered.joint_ids()).unsqueeze(0)
    types = torch.from_numpy(centered.types()).unsqueeze(0)
    centroid = torch.as_tensor(centered.centroid, dtype=dtype).unsqueeze(0)
    was_training = network.training
    network.train(mode == "train")
    try:
        if mode == "eval":
            with torch.no_grad():
                return run_network(network, skeleton, data, tolerances,
                                   joint_ids, types, centroid)
        return run_network(network, skeleton, data, tolerances, joint_ids, types, centroid)
    finally:
        network.train(was_training)


def compute_gradients(loss: torch.Tensor, network: nn.Module) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of a scalar loss for every network parameter.

    Parameters that do not influence the loss get zero gradients. A
    non-finite loss raises NumericalError before any backward work.
    """
    if loss.ndim != 0:
        raise ShapeError("compute_gradients expects a scalar loss")
    if not bool(torch.isfinite(loss)):
        raise NumericalError(f"loss is non-finite: {float(loss)}")
    names, params = zip(*network.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return {
        name: (torch.zeros_like(param) if grad is None else grad)
        for name, param, grad in zip(names, params, grads)
    }


def build_network(config: ModelConfig, model_type: str = "protores", seed: int = 0) -> nn.Module:
    if model_type == "protores":
        return ProtoResNetwork(config, seed=seed)
    if model_type == "masked_fcr":
        return MaskedFCRNetwork(config, seed=seed)
    raise ConfigError(f"unknown model type {model_type!r}")


def network_parameters_numpy(network: nn.Module) -> dict[str, np.ndarray]:
    return {
        name: tensor.detach().cpu().numpy().astype(np.float32)
        for name, tensor in network.state_dict().items()
    }


def load_network_parameters(network: nn.Module, params: dict[str, np.ndarray]) -> None:
    state = network.state_dict()
    missing = set(state) - set(params)
    extra = set(params) - set(state)
    if missing or extra:
        raise ShapeError(
            f"parameter name mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
        )
    dtype = next(network.parameters()).dtype
    converted = {}
    for name, value in params.items():
        tensor = torch.as_tensor(np.asarray(value)).to(dtype)
        if tuple(tensor.shape) != tuple(state[name].shape):
            raise ShapeError(
                f"parameter {name}: shape {tuple(tensor.shape)} does not match "
                f"{tuple(state[name].shape)}"
            )
        converted[name] = tensor
    network.load_state_dict(converted)
