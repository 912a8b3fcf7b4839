"""Skeleton definition: joint tree with fixed bone offsets, mirror map and zone labels."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SkeletonError

ZONES = ("left-arm", "right-arm", "left-leg", "right-leg", "hips", "head")
LIMB_ZONES = ("left-arm", "right-arm", "left-leg", "right-leg")


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None  # index of the parent joint; None only for the root
    offset: tuple[float, float, float]  # displacement from parent at zero rotation
    mirror: str  # name of the joint this one maps to under a YZ-plane flip
    zone: str


class SkeletonSpec:
    """Joint hierarchy in topological order (parents precede children, root at 0)."""

    def __init__(self, joints: list[Joint]):
        self.joints = list(joints)
        self._validate()
        self.names = [j.name for j in self.joints]
        self.index_of = {j.name: i for i, j in enumerate(self.joints)}
        self.parents = np.array(
            [-1 if j.parent is None else j.parent for j in self.joints], dtype=np.int64
        )
        self.offsets = np.array([j.offset for j in self.joints], dtype=np.float64)
        self.mirror_indices = np.array(
            [self.joints.index(next(k for k in self.joints if k.name == j.mirror)) for j in self.joints],
            dtype=np.int64,
        )
        self.zones: dict[str, list[int]] = {z: [] for z in ZONES}
        for i, j in enumerate(self.joints):
            self.zones[j.zone].append(i)

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    def _validate(self) -> None:
        if not self.joints:
            raise SkeletonError("skeleton has no joints")
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise SkeletonError("duplicate joint names")
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if roots != [0]:
            raise SkeletonError(f"exactly one root at index 0 required, found roots at {roots}")
        for i, j in enumerate(self.joints):
            if j.parent is not None and not (0 <= j.parent < i):
                raise SkeletonError(
                    f"joint {j.name!r} (index {i}) must have parent index < {i}, got {j.parent}"
                )
            if j.zone not in ZONES:
                raise SkeletonError(f"joint {j.name!r} has unknown zone {j.zone!r}")
        by_name = {j.name: j for j in self.joints}
        for j in self.joints:
            if j.mirror not in by_name:
                raise SkeletonError(f"joint {j.name!r} mirrors unknown joint {j.mirror!r}")
            if by_name[j.mirror].mirror != j.name:
                raise SkeletonError(f"mirror map is not an involution at {j.name!r}")
        for zone in LIMB_ZONES:
            if not any(j.zone == zone for j in self.joints):
                raise SkeletonError(f"limb zone {zone!r} is empty")

    def mirror_index(self, index: int) -> int:
        return int(self.mirror_indices[index])

    def resolve_joint(self, ref: int | str) -> int:
        """Accept a joint name or index and return the index."""
        if isinstance(ref, str):
            if ref not in self.index_of:
                raise SkeletonError(f"unknown joint name {ref!r}")
            return self.index_of[ref]
        index = int(ref)
        if not 0 <= index < self.joint_count:
            raise SkeletonError(f"joint index {index} out of range [0, {self.joint_count})")
        return index

    def to_dict(self) -> dict:
        return {
            "joints": [
                {
                    "name": j.name,
                    "parent": None if j.parent is None else self.joints[j.parent].name,
                    "offset": list(j.offset),
                    "mirror": j.mirror,
                    "zone": j.zone,
                }
                for j in self.joints
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SkeletonSpec":
        raw = data.get("joints")
        if not isinstance(raw, list) or not raw:
            raise SkeletonError("skeleton document must contain a non-empty 'joints' list")
        name_to_index = {entry.get("name"): i for i, entry in enumerate(raw)}
        joints = []
        for i, entry in enumerate(raw):
            try:
                parent_ref = entry["parent"]
                if parent_ref is None:
                    parent = None
                elif isinstance(parent_ref, str):
                    if parent_ref not in name_to_index:
                        raise SkeletonError(f"joint {entry['name']!r} has unknown parent {parent_ref!r}")
                    parent = name_to_index[parent_ref]
                else:
                    parent = int(parent_ref)
                offset = entry["offset"]
                joints.append(
                    Joint(
                        name=str(entry["name"]),
                        parent=parent,
                        offset=(float(offset[0]), float(offset[1]), float(offset[2])),
                        mirror=str(entry["mirror"]),
                        zone=str(entry["zone"]),
                    )
                )
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise SkeletonError(f"malformed joint record at position {i}: {exc}") from exc
        return cls(joints)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SkeletonSpec":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SkeletonError(f"skeleton file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)
