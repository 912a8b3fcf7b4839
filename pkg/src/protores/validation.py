"""Input validation helpers used at public API boundaries."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError


def as_float_array(x, name: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, optionally enforcing an exact shape.

    Shape entries of -1 match any extent along that axis.
    """
    arr = np.asarray(x, dtype=np.float64)
    if shape is not None:
        if arr.ndim != len(shape):
            raise ShapeError(f"{name}: expected {len(shape)} dims, got shape {arr.shape}")
        for axis, want in enumerate(shape):
            if want != -1 and arr.shape[axis] != want:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def check_in_range(value: float, lo: float, hi: float, name: str) -> float:
    value = float(value)
    if not (lo <= value <= hi):
        raise DomainError(f"{name} must be in [{lo}, {hi}], got {value}")
    return value


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0:
        raise DomainError(f"{name} must be positive, got {value}")
    return value


def check_unit_quaternions(quats: np.ndarray, tol: float = 1e-3) -> np.ndarray:
    """Validate quaternion norms and renormalize; raises past `tol`."""
    quats = np.asarray(quats, dtype=np.float64)
    if quats.shape[-1] != 4:
        raise ShapeError(f"quaternions must have last dim 4, got {quats.shape}")
    norms = np.linalg.norm(quats, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise DomainError(f"quaternion norm deviates from 1 by {worst:.2e} (tolerance {tol:.0e})")
    return quats / norms[..., None]


def check_same_length(a, b, name_a: str, name_b: str) -> None:
    if len(a) != len(b):
        raise ShapeError(f"{name_a} (len {len(a)}) and {name_b} (len {len(b)}) differ in length")
