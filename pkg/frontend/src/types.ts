/** Wire and document types shared with the solve service. */

export type EffectorKind = "position" | "rotation" | "lookat";

export interface EffectorData {
  joint: string;
  type: EffectorKind;
  /** position: xyz + three zeros; rotation: 6D two-column form;
   *  lookat: target xyz + unit local direction xyz. */
  data: [number, number, number, number, number, number];
  /** Tolerance in [0, 1]; 0 = strict. */
  tolerance: number;
}

export interface EffectorSetDocument {
  effectors: EffectorData[];
}

export interface SolveRequest {
  model?: string;
  effectors: EffectorData[];
  options?: {
    include_global_positions?: boolean;
    rotation_format?: "quaternion" | "sixd";
  };
  request_id?: number | string;
}

export interface SolveResponse {
  root_position: [number, number, number];
  rotation_format: "quaternion" | "sixd";
  rotations: number[][];
  global_positions?: [number, number, number][];
  latency_ms: number;
  request_id?: number | string;
  error?: string;
}

export interface JointDocument {
  name: string;
  parent: string | null;
  offset: [number, number, number];
  mirror: string;
  zone: string;
}

export interface SkeletonDocument {
  joints: JointDocument[];
}

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // x, y, z, w
