/** Glue between session state, a solver connection and the renderer.
 *
 * Every effector edit triggers a solve; drags stream through the throttle.
 * The rendered pose is always the latest response the solver delivered.
 */

import type { SolverConnection } from "./client";
import { ThrottledSolveSender } from "./client";
import { axisAngleToQuat } from "./math";
import { SessionState } from "./state";
import type {
  EffectorData,
  EffectorKind,
  SkeletonDocument,
  SolveRequest,
  SolveResponse,
  Vec3,
} from "./types";

export class PoseStudioController {
  readonly session: SessionState;
  private readonly sender: ThrottledSolveSender;
  private poseListeners: ((response: SolveResponse) => void)[] = [];
  private statusListeners: ((connected: boolean) => void)[] = [];

  constructor(
    skeleton: SkeletonDocument,
    private readonly connection: SolverConnection,
    throttleMs = 33,
  ) {
    this.session = new SessionState(skeleton);
    this.sender = new ThrottledSolveSender(connection, throttleMs);
    connection.onResponse((response) => {
      if (response.error) return;
      this.session.applyResponse(response);
      this.poseListeners.forEach((h) => h(response));
    });
    connection.onStatus((connected) => {
      this.session.status = connected ? "connected" : "disconnected";
      this.statusListeners.forEach((h) => h(connected));
      if (connected) this.requestSolve();
    });
  }

  onPose(handler: (response: SolveResponse) => void): void {
    this.poseListeners.push(handler);
  }

  onStatus(handler: (connected: boolean) => void): void {
    this.statusListeners.push(handler);
  }

  buildRequest(): SolveRequest {
    return {
      effectors: this.session.exportDocument().effectors,
      options: { include_global_positions: true, rotation_format: "quaternion" },
    };
  }

  requestSolve(): void {
    this.sender.send(this.buildRequest());
  }

  addEffector(joint: string, type: EffectorKind, data?: EffectorData["data"],
              tolerance = 0): boolean {
    const added = this.session.addEffector(joint, type, data, tolerance);
    if (added) this.requestSolve();
    return added;
  }

  removeEffector(joint: string, type: EffectorKind): boolean {
    const removed = this.session.removeEffector(joint, type);
    if (removed) this.requestSolve();
    return removed;
  }

  setTolerance(joint: string, type: EffectorKind, tolerance: number): boolean {
    const changed = this.session.setTolerance(joint, type, tolerance);
    if (changed) this.requestSolve();
    return changed;
  }

  beginDrag(joint: string, type: EffectorKind): boolean {
    return this.session.beginDrag(joint, type);
  }

  dragTo(joint: string, type: EffectorKind, point: Vec3): void {
    if (this.session.dragTo(joint, type, point)) this.requestSolve();
  }

  dragRotate(joint: string, axis: Vec3, angle: number): void {
    if (this.session.dragRotate(joint, axisAngleToQuat(axis, angle))) {
      this.requestSolve();
    }
  }

  endDrag(): void {
    this.session.endDrag();
    this.requestSolve();
  }

  undo(): void {
    if (this.session.undo()) this.requestSolve();
  }

  redo(): void {
    if (this.session.redo()) this.requestSolve();
  }

  exportJson(): string {
    return JSON.stringify(this.session.exportDocument(), null, 2);
  }

  importJson(text: string): void {
    this.session.importDocument(JSON.parse(text));
    this.requestSolve();
  }

  dispose(): void {
    this.sender.dispose();
    this.connection.close();
  }
}
