"""Command-line interface: train, eval, bench gen/sweep, solve, stats, serve, inspect."""

from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .benchmark import (
    evaluate_model,
    generate_5point_benchmark,
    generate_random_benchmark,
    load_benchmark_file,
    network_solver,
    save_benchmark_file,
)
from .checkpoint import load_checkpoint, read_manifest
from .config import ENV_PREFIX, ModelConfig, load_train_config
from .dataset import dataset_stats, format_stats_table, load_dataset
from .effectors import load_effector_set
from .errors import ProtoResError
from .kinematics import matrix_to_quaternion, matrix_to_rotation6d
from .model import build_network, load_network_parameters, model_forward
from .service import DEFAULT_MODEL_ID, build_registry, run_server
from .skeleton import SkeletonSpec
from .training import train as run_training


def common_options(fn):
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  default=None, help="Key=value config file.")
    @click.option("--seed", type=int, default=None, help="Random seed override.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def load_network_from_checkpoint(checkpoint: str):
    params, config, model_type = load_checkpoint(checkpoint)
    network = build_network(config, model_type)
    load_network_parameters(network, params)
    network.train(False)
    return network, config, model_type


@click.group()
def main() -> None:
    """Pose reconstruction from sparse effectors: training, evaluation and serving."""


@main.command("train")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--model-type", type=click.Choice(["protores", "masked_fcr"]),
              default="protores")
@click.option("--width", type=int, default=256)
@click.option("--encoder-blocks", type=int, default=3)
@click.option("--gpd-blocks", type=int, default=3)
@click.option("--ikd-blocks", type=int, default=3)
@click.option("--layers-per-block", type=int, default=3)
@click.option("--embedding-dim", type=int, default=32)
@click.option("--dropout", type=float, default=0.01)
@click.option("--encoder-variant", type=click.Choice(["psa", "mcdc"]), default="psa")
@click.option("--epochs", type=int, default=None, help="Training steps (one batch each).")
@click.option("--batch-size", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--resume", is_flag=True, default=False)
@common_options
def train_command(dataset_path, skeleton_path, out_dir, model_type, width,
                  encoder_blocks, gpd_blocks, ikd_blocks, layers_per_block,
                  embedding_dim, dropout, encoder_variant, epochs, batch_size,
                  learning_rate, resume, config_path, seed):
    """Train a model and write checkpoints plus a metrics log."""
    try:
        skeleton = SkeletonSpec.load(skeleton_path)
        dataset = load_dataset(dataset_path, skeleton)
        train_config = load_train_config(config_path, overrides={
            "epochs": epochs, "batch_size": batch_size,
            "learning_rate": learning_rate, "seed": seed,
        })
        model_config = ModelConfig(
            joint_count=skeleton.joint_count, width=width,
            encoder_blocks=encoder_blocks, gpd_blocks=gpd_blocks,
            ikd_blocks=ikd_blocks, layers_per_block=layers_per_block,
            embedding_dim=embedding_dim, dropout=dropout,
            encoder_variant=encoder_variant,
        )
        result = run_training(dataset, skeleton, model_config, train_config,
                              out_dir, model_type=model_type, resume=resume)
    except (ProtoResError, OSError) as exc:
        fail(str(exc))
    click.echo(f"checkpoint: {result.checkpoint_path}")
    if result.metrics:
        click.echo(f"final total loss: {result.metrics[-1]['total']:.6g}")


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--bench", "bench_paths", required=True, multiple=True,
              type=click.Path(exists=True),
              help="Benchmark file or directory (repeatable).")
@click.option("--json", "as_json", is_flag=True, default=False)
@common_options
def eval_command(checkpoint, skeleton_path, bench_paths, as_json, config_path, seed):
    """Evaluate a checkpoint on benchmark files."""
    try:
        skeleton = SkeletonSpec.load(skeleton_path)
        network, config, _ = load_network_from_checkpoint(checkpoint)
        paths: list[Path] = []
        for p in bench_paths:
            p = Path(p)
            paths.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
        if not paths:
            fail("no benchmark files found")
        files = [load_benchmark_file(p, skeleton) for p in paths]
        report = evaluate_model(network_solver(network, skeleton), files, skeleton,
                                file_names=[p.name for p in paths])
    except (ProtoResError, OSError) as exc:
        fail(str(exc))
    if as_json:
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    else:
        click.echo(report.format_table(), nl=False)


@main.group("bench")
def bench_group() -> None:
    """Benchmark file generation and sweeps."""


@bench_group.command("gen")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--five-point", is_flag=True, default=False,
              help="Also generate the 5-point benchmark file.")
@common_options
def bench_gen_command(dataset_path, skeleton_path, out_dir, five_point,
                      config_path, seed):
    """Generate the random benchmark files (and optionally the 5-point file)."""
    try:
        skeleton = SkeletonSpec.load(skeleton_path)
        dataset = load_dataset(dataset_path, skeleton)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = generate_random_benchmark(dataset, skeleton, seed=seed or 0)
        for bench in files:
            save_benchmark_file(bench, out / f"random_n{bench.n_effectors:02d}.json",
                                skeleton)
        if five_point:
            save_benchmark_file(generate_5point_benchmark(dataset, skeleton),
                                out / "five_point.json", skeleton)
    except (ProtoResError, OSError) as exc:
        fail(str(exc))
    click.echo(f"wrote {len(files) + (1 if five_point else 0)} files to {out_dir}")


@bench_group.command("sweep")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--types", "type_mix", type=click.Choice(["position", "rotation", "mixed"]),
              default="mixed")
@click.option("--fractions", default="0.1,0.25,0.5,0.75,1.0",
              help="Comma-separated fractions of joints used as effectors.")
@click.option("--json", "as_json", is_flag=True, default=False)
@common_options
def bench_sweep_command(checkpoint, skeleton_path, dataset_path, type_mix,
                        fractions, as_json, config_path, seed):
    """Metrics as a function of the share of joints given as effectors."""
    from .benchmark import effector_sweep

    try:
        skeleton = SkeletonSpec.load(skeleton_path)
        dataset = load_dataset(dataset_path, skeleton)
        network, _, _ = load_network_from_checkpoint(checkpoint)
        fraction_values = [float(v) for v in fractions.split(",") if v.strip()]
        rows = effector_sweep(network_solver(network, skeleton), dataset, skeleton,
                              type_mix, fraction_values, seed=seed or 0)
    except (ProtoResError, OSError, ValueError) as exc:
        fail(str(exc))
    if as_json:
        click.echo(json.dumps(rows, sort_keys=True))
    else:
        click.echo(f"{'fraction':>10} {'position_metric':>18} {'rotation_metric':>18}")
        for row in rows:
            click.echo(f"{row['fraction']:>10.3f} {row['position_metric']:>18.6e} "
                       f"{row['rotation_metric']:>18.6e}")


@main.command("solve")
@click.option("--effectors", "effectors_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rotation-format", type=click.Choice(["quaternion", "sixd"]),
              default="quaternion")
@click.option("--global-positions", is_flag=True, default=False)
@common_options
def solve_command(effectors_path, checkpoint, skeleton_path, out_path,
                  rotation_format, global_positions, config_path, seed):
    """Solve one effector file into a pose file."""
    try:
        skeleton = SkeletonSpec.load(skeleton_path)
        network, config, _ = load_network_from_checkpoint(checkpoint)
        effector_set = load_effector_set(effectors_path, skeleton).validate()
        output = model_forward(effector_set, skeleton, network, mode="eval")
        if rotation_format == "quaternion":
            rotations = matrix_to_quaternion(output.local_rotations[0].numpy())
        else:
            rotations = matrix_to_rotation6d(output.local_rotations[0]).numpy()
        pose_doc = {
            "root_position": [float(v) for v in output.draft_positions[0, 0].numpy()],
            "rotation_format": rotation_format,
            "rotations": [[float(v) for v in row] for row in rotations],
        }
        if global_positions:
            pose_doc["global_positions"] = [
                [float(v) for v in row] for row in output.global_positions[0].numpy()
            ]
        Path(out_path).write_text(json.dumps(pose_doc, indent=2) + "\n")
    except (ProtoResError, OSError) as exc:
        fail(str(exc))
    click.echo(f"wrote {out_path}")


@main.command("stats")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True, default=False)
@common_options
def stats_command(dataset_path, skeleton_path, as_json, config_path, seed):
    """Per-joint hip-local position and quaternion standard deviations."""
    try:
        skeleton = SkeletonSpec.load(skeleton_path)
        dataset = load_dataset(dataset_path, skeleton)
        stats = dataset_stats(dataset)
    except (ProtoResError, OSError) as exc:
        fail(str(exc))
    if as_json:
        click.echo(json.dumps({
            "joints": stats.joint_names,
            "position_std": np.round(stats.position_std, 10).tolist(),
            "quaternion_std": np.round(stats.quaternion_std, 10).tolist(),
        }, sort_keys=True))
    else:
        click.echo(format_stats_table(stats), nl=False)


@main.command("serve")
@click.option("--checkpoint", default=None, type=click.Path(),
              help=f"Checkpoint path (or {ENV_PREFIX}CHECKPOINT).")
@click.option("--skeleton", "skeleton_path", required=True, type=click.Path(exists=True))
@click.option("--bind", default=None, help=f"host:port (or {ENV_PREFIX}BIND).")
@common_options
def serve_command(checkpoint, skeleton_path, bind, config_path, seed):
    """Run the solve service. Flag > environment > default precedence."""
    checkpoint = checkpoint or os.environ.get(ENV_PREFIX + "CHECKPOINT")
    bind = bind or os.environ.get(ENV_PREFIX + "BIND") or "127.0.0.1:8080"
    if not checkpoint:
        fail(f"no checkpoint given (use --checkpoint or {ENV_PREFIX}CHECKPOINT)")
    if not Path(checkpoint).exists():
        fail(f"checkpoint {checkpoint} does not exist or is unreadable")
    try:
        registry = build_registry(checkpoint, skeleton_path, DEFAULT_MODEL_ID)
    except (ProtoResError, OSError) as exc:
        fail(str(exc))
    click.echo(f"serving model {DEFAULT_MODEL_ID!r} on {bind}")
    run_server(registry, bind)


@main.command("inspect")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@common_options
def inspect_command(checkpoint, config_path, seed):
    """Dump a checkpoint manifest."""
    try:
        manifest = read_manifest(checkpoint)
    except ProtoResError as exc:
        fail(str(exc))
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
