/** In-process solver with the exact wire contract of the live service.
 *
 * The pose it returns is not learned: position effectors softly pull the
 * root, and every response is the forward kinematics of a valid local-pose,
 * so bone lengths hold exactly. This makes the whole UI testable and
 * demoable with no trained model; swapping in the real endpoint changes
 * nothing but the connection.
 */

import type { SolverConnection } from "./client";
import { forwardKinematics } from "./math";
import type { Quat, SkeletonDocument, SolveRequest, SolveResponse, Vec3 } from "./types";

export class MockSolverConnection implements SolverConnection {
  private responseHandlers: ((response: SolveResponse) => void)[] = [];
  private statusHandlers: ((connected: boolean) => void)[] = [];
  /** Solves performed, for tests measuring live update rates. */
  solveCount = 0;

  constructor(private readonly skeleton: SkeletonDocument) {
    queueMicrotask(() => this.statusHandlers.forEach((h) => h(true)));
  }

  solve(request: SolveRequest): void {
    const response = this.solveSync(request);
    this.solveCount += 1;
    queueMicrotask(() => this.responseHandlers.forEach((h) => h(response)));
  }

  solveSync(request: SolveRequest): SolveResponse {
    const started = performance.now();
    const joints = this.skeleton.joints;
    // canned local pose: identity rotations with a gentle arm swing so the
    // figure does not look like a T collapsed on itself
    const rotations: Quat[] = joints.map((j) =>
      j.zone === "left-arm" || j.zone === "right-arm"
        ? [0, 0, Math.SQRT1_2 * 0.2, Math.sqrt(1 - 0.02)]
        : [0, 0, 0, 1],
    );
    let root: Vec3 = [0, 1, 0];
    const positional = (request.effectors ?? []).filter((e) => e.type === "position");
    if (positional.length > 0) {
      // soft-follow: root tracks the centroid of position effectors
      const c: Vec3 = [0, 0, 0];
      positional.forEach((e) => {
        c[0] += e.data[0] / positional.length;
        c[1] += e.data[1] / positional.length;
        c[2] += e.data[2] / positional.length;
      });
      root = [c[0], Math.max(0.5, c[1]), c[2]];
    }
    const pose = forwardKinematics(this.skeleton, root, rotations);
    const response: SolveResponse = {
      root_position: root,
      rotation_format: "quaternion",
      rotations: rotations.map((q) => [...q]),
      global_positions: pose.positions,
      latency_ms: performance.now() - started,
    };
    if (request.request_id !== undefined) response.request_id = request.request_id;
    return response;
  }

  onResponse(handler: (response: SolveResponse) => void): void {
    this.responseHandlers.push(handler);
  }

  onStatus(handler: (connected: boolean) => void): void {
    this.statusHandlers.push(handler);
  }

  close(): void {
    this.statusHandlers.forEach((h) => h(false));
  }
}
