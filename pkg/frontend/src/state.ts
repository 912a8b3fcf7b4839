/** Session state: effector list with undo/redo, import/export, last solved pose.
 *
 * All mutating operations validate their inputs and snapshot the effector
 * list for undo; a drag contributes one undo entry no matter how many move
 * events it produced.
 */

import { rotate6d } from "./math";
import type {
  EffectorData,
  EffectorKind,
  EffectorSetDocument,
  Quat,
  SkeletonDocument,
  SolveResponse,
  Vec3,
} from "./types";

export type ConnectionStatus = "connected" | "disconnected";

const MAX_UNDO = 200;

export function defaultEffectors(skeleton: SkeletonDocument): EffectorData[] {
  // Minimal well-posed request: pin the root joint at a rest height.
  const root = skeleton.joints[0];
  return [
    {
      joint: root.name,
      type: "position",
      data: [0, 1, 0, 0, 0, 0],
      tolerance: 0,
    },
  ];
}

function cloneEffectors(effectors: EffectorData[]): EffectorData[] {
  return effectors.map((e) => ({ ...e, data: [...e.data] as EffectorData["data"] }));
}

export class SessionState {
  readonly skeleton: SkeletonDocument;
  effectors: EffectorData[];
  lastResponse: SolveResponse | null = null;
  status: ConnectionStatus = "disconnected";
  validationMessage: string | null = null;

  private undoStack: EffectorData[][] = [];
  private redoStack: EffectorData[][] = [];
  private dragging = false;

  constructor(skeleton: SkeletonDocument) {
    this.skeleton = skeleton;
    this.effectors = defaultEffectors(skeleton);
  }

  private jointExists(joint: string): boolean {
    return this.skeleton.joints.some((j) => j.name === joint);
  }

  find(joint: string, type: EffectorKind): EffectorData | undefined {
    return this.effectors.find((e) => e.joint === joint && e.type === type);
  }

  private snapshot(): void {
    this.undoStack.push(cloneEffectors(this.effectors));
    if (this.undoStack.length > MAX_UNDO) this.undoStack.shift();
    this.redoStack = [];
  }

  addEffector(joint: string, type: EffectorKind, data?: EffectorData["data"],
              tolerance = 0): boolean {
    this.validationMessage = null;
    if (!this.jointExists(joint)) {
      this.validationMessage = `unknown joint ${joint}`;
      return false;
    }
    if (this.find(joint, type)) {
      this.validationMessage = `${joint} already has a ${type} effector`;
      return false;
    }
    this.snapshot();
    const payload: EffectorData["data"] =
      data ? ([...data] as EffectorData["data"])
        : type === "lookat" ? [0, 1, 1, 0, 0, 1] : [0, 1, 0, 0, 0, 0];
    this.effectors.push({ joint, type, data: payload, tolerance });
    return true;
  }

  removeEffector(joint: string, type: EffectorKind): boolean {
    const index = this.effectors.findIndex((e) => e.joint === joint && e.type === type);
    if (index < 0) return false;
    this.snapshot();
    this.effectors.splice(index, 1);
    if (this.effectors.length === 0) {
      // empty sets are not solvable; fall back to the default set
      this.effectors = defaultEffectors(this.skeleton);
    }
    return true;
  }

  setTolerance(joint: string, type: EffectorKind, tolerance: number): boolean {
    const effector = this.find(joint, type);
    if (!effector) return false;
    if (!(tolerance >= 0 && tolerance <= 1)) {
      this.validationMessage = "tolerance must be in [0, 1]";
      return false;
    }
    this.snapshot();
    effector.tolerance = tolerance;
    return true;
  }

  /** Start a gizmo drag: one undo entry covers the whole gesture. */
  beginDrag(joint: string, type: EffectorKind): boolean {
    if (!this.find(joint, type) || this.dragging) return false;
    this.snapshot();
    this.dragging = true;
    return true;
  }

  /** Move the drag target. Look-at drags move only the target coordinates. */
  dragTo(joint: string, type: EffectorKind, point: Vec3): boolean {
    const effector = this.find(joint, type);
    if (!effector || !this.dragging) return false;
    effector.data[0] = point[0];
    effector.data[1] = point[1];
    effector.data[2] = point[2];
    return true;
  }

  /** Rotation-ring drag: pre-rotate the effector's 6D payload. */
  dragRotate(joint: string, delta: Quat): boolean {
    const effector = this.find(joint, "rotation");
    if (!effector || !this.dragging) return false;
    effector.data = rotate6d(effector.data, delta);
    return true;
  }

  endDrag(): void {
    this.dragging = false;
  }

  undo(): boolean {
    const previous = this.undoStack.pop();
    if (!previous) return false;
    this.redoStack.push(cloneEffectors(this.effectors));
    this.effectors = previous;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(cloneEffectors(this.effectors));
    this.effectors = next;
    return true;
  }

  exportDocument(): EffectorSetDocument {
    return { effectors: cloneEffectors(this.effectors) };
  }

  importDocument(doc: EffectorSetDocument): void {
    if (!doc || !Array.isArray(doc.effectors) || doc.effectors.length === 0) {
      throw new Error("effector document must contain a non-empty 'effectors' list");
    }
    const seen = new Set<string>();
    for (const e of doc.effectors) {
      if (!this.jointExists(e.joint)) throw new Error(`unknown joint ${e.joint}`);
      if (!["position", "rotation", "lookat"].includes(e.type)) {
        throw new Error(`unknown effector type ${e.type}`);
      }
      if (!Array.isArray(e.data) || e.data.length !== 6) {
        throw new Error("effector data must have 6 numbers");
      }
      const key = `${e.joint}/${e.type}`;
      if (seen.has(key)) throw new Error(`duplicate effector ${key}`);
      seen.add(key);
    }
    this.snapshot();
    this.effectors = cloneEffectors(doc.effectors);
  }

  applyResponse(response: SolveResponse): void {
    this.lastResponse = response;
  }
}
