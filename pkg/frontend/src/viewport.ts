/** Three.js viewport: skeleton from solved global positions plus effector gizmos.
 *
 * Position effectors render as draggable cube gizmos, rotation effectors as
 * orbit rings, look-at effectors as draggable target markers with a sight
 * line from their joint. Dragging streams throttled solve requests through
 * the controller; the camera orbits/pans/zooms via OrbitControls.
 */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";
import type { PoseStudioController } from "./controller";
import type { EffectorData, SolveResponse, Vec3 } from "./types";

const COLORS = { position: 0x4caf50, rotation: 0x2196f3, lookat: 0xff9800 };

interface Gizmo {
  effector: EffectorData;
  object: THREE.Object3D;
  sightLine?: THREE.Line;
}

export class Viewport {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private bones: THREE.LineSegments;
  private jointDots: THREE.Points;
  private gizmos: Gizmo[] = [];
  private raycaster = new THREE.Raycaster();
  private dragging: Gizmo | null = null;
  private dragPlane = new THREE.Plane();
  private lastPointerX = 0;
  private banner: HTMLElement;
  /** Rendered solve responses, for update-rate instrumentation. */
  renderedSolves = 0;

  constructor(private readonly controller: PoseStudioController,
              container: HTMLElement, banner: HTMLElement) {
    this.banner = banner;
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setSize(container.clientWidth, container.clientHeight);
    container.appendChild(this.renderer.domElement);
    this.camera = new THREE.PerspectiveCamera(
      50, container.clientWidth / container.clientHeight, 0.01, 100);
    this.camera.position.set(2.2, 1.6, 2.2);
    this.controls = new OrbitControls(this.camera, this.renderer.domElement);
    this.controls.target.set(0, 1, 0);

    this.scene.background = new THREE.Color(0x1c1e22);
    this.scene.add(new THREE.GridHelper(4, 16, 0x444444, 0x2c2e33));
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.8));
    const sun = new THREE.DirectionalLight(0xffffff, 1.2);
    sun.position.set(3, 5, 2);
    this.scene.add(sun);

    const joints = controller.session.skeleton.joints.length;
    const boneGeometry = new THREE.BufferGeometry();
    boneGeometry.setAttribute(
      "position", new THREE.BufferAttribute(new Float32Array(joints * 2 * 3), 3));
    this.bones = new THREE.LineSegments(
      boneGeometry, new THREE.LineBasicMaterial({ color: 0xe8e8e8 }));
    this.scene.add(this.bones);
    const dotGeometry = new THREE.BufferGeometry();
    dotGeometry.setAttribute(
      "position", new THREE.BufferAttribute(new Float32Array(joints * 3), 3));
    this.jointDots = new THREE.Points(
      dotGeometry, new THREE.PointsMaterial({ color: 0xffd54f, size: 0.035 }));
    this.scene.add(this.jointDots);

    controller.onPose((response) => this.applyPose(response));
    controller.onStatus((connected) => {
      // on disconnect: banner up, last pose stays frozen on screen
      this.banner.style.display = connected ? "none" : "block";
    });

    const canvas = this.renderer.domElement;
    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", () => this.onPointerUp());
    window.addEventListener("resize", () => {
      this.camera.aspect = container.clientWidth / container.clientHeight;
      this.camera.updateProjectionMatrix();
      this.renderer.setSize(container.clientWidth, container.clientHeight);
    });
    this.animate();
  }

  syncGizmos(): void {
    for (const gizmo of this.gizmos) {
      this.scene.remove(gizmo.object);
      if (gizmo.sightLine) this.scene.remove(gizmo.sightLine);
    }
    this.gizmos = [];
    for (const effector of this.controller.session.effectors) {
      let object: THREE.Object3D;
      if (effector.type === "position") {
        object = new THREE.Mesh(
          new THREE.BoxGeometry(0.06, 0.06, 0.06),
          new THREE.MeshStandardMaterial({ color: COLORS.position }));
      } else if (effector.type === "rotation") {
        object = new THREE.Mesh(
          new THREE.TorusGeometry(0.09, 0.008),
          new THREE.MeshStandardMaterial({ color: COLORS.rotation }));
      } else {
        object = new THREE.Mesh(
          new THREE.OctahedronGeometry(0.05),
          new THREE.MeshStandardMaterial({ color: COLORS.lookat }));
      }
      const gizmo: Gizmo = { effector, object };
      if (effector.type === "lookat") {
        const lineGeometry = new THREE.BufferGeometry();
        lineGeometry.setAttribute(
          "position", new THREE.BufferAttribute(new Float32Array(6), 3));
        gizmo.sightLine = new THREE.Line(
          lineGeometry, new THREE.LineDashedMaterial({ color: COLORS.lookat }));
        this.scene.add(gizmo.sightLine);
      }
      this.scene.add(object);
      this.gizmos.push(gizmo);
    }
    this.placeGizmos();
  }

  private jointIndex(name: string): number {
    return this.controller.session.skeleton.joints.findIndex((j) => j.name === name);
  }

  private placeGizmos(): void {
    const pose = this.controller.session.lastResponse;
    for (const gizmo of this.gizmos) {
      const e = gizmo.effector;
      if (e.type === "position" || e.type === "lookat") {
        gizmo.object.position.set(e.data[0], e.data[1], e.data[2]);
      } else if (pose?.global_positions) {
        const j = this.jointIndex(e.joint);
        if (j >= 0) gizmo.object.position.set(...pose.global_positions[j]);
      }
      if (gizmo.sightLine && pose?.global_positions) {
        const j = this.jointIndex(e.joint);
        if (j >= 0) {
          const attr = gizmo.sightLine.geometry.getAttribute("position");
          attr.setXYZ(0, ...pose.global_positions[j]);
          attr.setXYZ(1, e.data[0], e.data[1], e.data[2]);
          attr.needsUpdate = true;
        }
      }
    }
  }

  private applyPose(response: SolveResponse): void {
    if (!response.global_positions) return;
    this.renderedSolves += 1;
    const skeleton = this.controller.session.skeleton;
    const boneAttr = this.bones.geometry.getAttribute("position");
    const dotAttr = this.jointDots.geometry.getAttribute("position");
    skeleton.joints.forEach((joint, i) => {
      const p = response.global_positions![i];
      dotAttr.setXYZ(i, p[0], p[1], p[2]);
      const parentIndex = joint.parent === null
        ? i : skeleton.joints.findIndex((j) => j.name === joint.parent);
      const q = response.global_positions![parentIndex];
      boneAttr.setXYZ(i * 2, q[0], q[1], q[2]);
      boneAttr.setXYZ(i * 2 + 1, p[0], p[1], p[2]);
    });
    boneAttr.needsUpdate = true;
    dotAttr.needsUpdate = true;
    this.placeGizmos();
  }

  private pointerRay(event: PointerEvent): void {
    const rect = this.renderer.domElement.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1);
    this.raycaster.setFromCamera(ndc, this.camera);
  }

  private onPointerDown(event: PointerEvent): void {
    this.pointerRay(event);
    const hits = this.raycaster.intersectObjects(this.gizmos.map((g) => g.object));
    if (!hits.length) return;
    const gizmo = this.gizmos.find((g) => g.object === hits[0].object
      || g.object.children.includes(hits[0].object));
    if (!gizmo) return;
    this.dragging = gizmo;
    this.lastPointerX = event.clientX;
    this.controls.enabled = false;
    this.controller.beginDrag(gizmo.effector.joint, gizmo.effector.type);
    // drag in the camera-facing plane through the gizmo
    const normal = this.camera.getWorldDirection(new THREE.Vector3()).negate();
    this.dragPlane.setFromNormalAndCoplanarPoint(normal, gizmo.object.position);
  }

  private onPointerMove(event: PointerEvent): void {
    if (!this.dragging) return;
    if (this.dragging.effector.type === "rotation") {
      // ring drag: horizontal motion spins the target about the view axis
      const delta = (event.clientX - this.lastPointerX) * 0.01;
      this.lastPointerX = event.clientX;
      const axis = this.camera.getWorldDirection(new THREE.Vector3());
      this.controller.dragRotate(this.dragging.effector.joint,
                                 [axis.x, axis.y, axis.z], delta);
      return;
    }
    this.pointerRay(event);
    const point = new THREE.Vector3();
    if (this.raycaster.ray.intersectPlane(this.dragPlane, point)) {
      const target: Vec3 = [point.x, point.y, point.z];
      this.dragging.object.position.set(...target);
      this.controller.dragTo(this.dragging.effector.joint,
                             this.dragging.effector.type, target);
    }
  }

  private onPointerUp(): void {
    if (this.dragging) {
      this.controller.endDrag();
      this.dragging = null;
    }
    this.controls.enabled = true;
  }

  private animate = (): void => {
    requestAnimationFrame(this.animate);
    this.controls.update();
    this.renderer.render(this.scene, this.camera);
  };
}
