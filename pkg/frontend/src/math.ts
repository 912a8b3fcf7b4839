/** Quaternion and forward-kinematics helpers for skeleton rendering. */

import type { Quat, SkeletonDocument, Vec3 } from "./types";

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

/** Rotate a vector by a unit quaternion (x, y, z, w). */
export function quatRotate(q: Quat, v: Vec3): Vec3 {
  const [x, y, z, w] = q;
  // t = 2 q_vec x v
  const tx = 2 * (y * v[2] - z * v[1]);
  const ty = 2 * (z * v[0] - x * v[2]);
  const tz = 2 * (x * v[1] - y * v[0]);
  return [
    v[0] + w * tx + (y * tz - z * ty),
    v[1] + w * ty + (z * tx - x * tz),
    v[2] + w * tz + (x * ty - y * tx),
  ];
}

/** Hamilton product; composes like applying b then a. */
export function quatMultiply(a: Quat, b: Quat): Quat {
  const [x1, y1, z1, w1] = a;
  const [x2, y2, z2, w2] = b;
  return [
    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
  ];
}

export function axisAngleToQuat(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]) || 1;
  const s = Math.sin(angle / 2);
  return [axis[0] / n * s, axis[1] / n * s, axis[2] / n * s, Math.cos(angle / 2)];
}

/** Pre-rotate a two-column 6D rotation payload by a unit quaternion. */
export function rotate6d(
  data: [number, number, number, number, number, number],
  q: Quat,
): [number, number, number, number, number, number] {
  const c1 = quatRotate(q, [data[0], data[1], data[2]]);
  const c2 = quatRotate(q, [data[3], data[4], data[5]]);
  return [c1[0], c1[1], c1[2], c2[0], c2[1], c2[2]];
}

export interface GlobalPose {
  positions: Vec3[];
  rotations: Quat[];
}

/** Tree recursion: local rotations + root position -> global transforms. */
export function forwardKinematics(
  skeleton: SkeletonDocument,
  rootPosition: Vec3,
  localRotations: Quat[],
): GlobalPose {
  const index = new Map(skeleton.joints.map((j, i) => [j.name, i]));
  const positions: Vec3[] = [];
  const rotations: Quat[] = [];
  skeleton.joints.forEach((joint, i) => {
    const local = quatNormalize(localRotations[i]);
    if (joint.parent === null) {
      positions.push([...rootPosition]);
      rotations.push(local);
      return;
    }
    const p = index.get(joint.parent);
    if (p === undefined) throw new Error(`unknown parent ${joint.parent}`);
    rotations.push(quatMultiply(rotations[p], local));
    const offsetWorld = quatRotate(rotations[p], joint.offset);
    positions.push([
      positions[p][0] + offsetWorld[0],
      positions[p][1] + offsetWorld[1],
      positions[p][2] + offsetWorld[2],
    ]);
  });
  return { positions, rotations };
}

export function boneLengths(skeleton: SkeletonDocument, positions: Vec3[]): number[] {
  const index = new Map(skeleton.joints.map((j, i) => [j.name, i]));
  return skeleton.joints.map((joint, i) => {
    if (joint.parent === null) return 0;
    const p = index.get(joint.parent)!;
    return Math.hypot(
      positions[i][0] - positions[p][0],
      positions[i][1] - positions[p][1],
      positions[i][2] - positions[p][2],
    );
  });
}
