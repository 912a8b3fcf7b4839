/** Application entry: builds the controller, viewport and effector panel.
 *
 * With `?mock=1` (or when the solve service is unreachable at startup) the
 * app runs against the in-process mock solver; otherwise it connects to the
 * service's WebSocket stream and fetches the skeleton over HTTP.
 */

import { WebSocketSolverConnection, type SolverConnection } from "./client";
import { PoseStudioController } from "./controller";
import { MockSolverConnection } from "./mockSolver";
import type { EffectorKind, SkeletonDocument } from "./types";
import { Viewport } from "./viewport";

const SERVICE_BASE = (window as unknown as { SERVICE_BASE?: string }).SERVICE_BASE
  ?? `${location.protocol}//${location.host}`;

async function loadSkeleton(useMock: boolean): Promise<SkeletonDocument> {
  if (!useMock) {
    const response = await fetch(`${SERVICE_BASE}/v1/skeletons/default`);
    if (response.ok) return (await response.json()) as SkeletonDocument;
  }
  const fallback = await fetch("./demo-skeleton.json");
  return (await fallback.json()) as SkeletonDocument;
}

function buildPanel(controller: PoseStudioController, panel: HTMLElement,
                    onMutate: () => void = () => undefined): () => void {
  const skeleton = controller.session.skeleton;
  panel.innerHTML = `
    <div class="row">
      <select id="joint-select"></select>
      <select id="type-select">
        <option value="position">position</option>
        <option value="rotation">rotation</option>
        <option value="lookat">look-at</option>
      </select>
      <button id="add-btn">add</button>
    </div>
    <div id="validation" class="validation"></div>
    <div id="effector-list"></div>
    <div class="row">
      <button id="undo-btn">undo</button>
      <button id="redo-btn">redo</button>
      <button id="export-btn">export</button>
      <label class="file-btn">import<input id="import-input" type="file" accept=".json"></label>
    </div>`;
  const jointSelect = panel.querySelector<HTMLSelectElement>("#joint-select")!;
  for (const joint of skeleton.joints) {
    const option = document.createElement("option");
    option.value = joint.name;
    option.textContent = joint.name;
    jointSelect.appendChild(option);
  }
  const typeSelect = panel.querySelector<HTMLSelectElement>("#type-select")!;
  const validation = panel.querySelector<HTMLElement>("#validation")!;
  const list = panel.querySelector<HTMLElement>("#effector-list")!;

  const refresh = () => {
    validation.textContent = controller.session.validationMessage ?? "";
    list.innerHTML = "";
    for (const effector of controller.session.effectors) {
      const row = document.createElement("div");
      row.className = "effector-row";
      const label = document.createElement("span");
      label.textContent = `${effector.joint} · ${effector.type}`;
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = "1";
      slider.step = "0.01";
      slider.value = String(effector.tolerance);
      slider.title = `tolerance ${effector.tolerance.toFixed(2)}`;
      slider.addEventListener("input", () => {
        controller.setTolerance(effector.joint, effector.type,
                                parseFloat(slider.value));
      });
      const remove = document.createElement("button");
      remove.textContent = "×";
      remove.addEventListener("click", () => {
        controller.removeEffector(effector.joint, effector.type);
        refresh();
        onMutate();
      });
      row.append(label, slider, remove);
      list.appendChild(row);
    }
  };

  panel.querySelector("#add-btn")!.addEventListener("click", () => {
    controller.addEffector(jointSelect.value, typeSelect.value as EffectorKind);
    refresh();
    onMutate();
  });
  panel.querySelector("#undo-btn")!.addEventListener("click", () => {
    controller.undo();
    refresh();
    onMutate();
  });
  panel.querySelector("#redo-btn")!.addEventListener("click", () => {
    controller.redo();
    refresh();
    onMutate();
  });
  panel.querySelector("#export-btn")!.addEventListener("click", () => {
    const blob = new Blob([controller.exportJson()], { type: "application/json" });
    const anchor = document.createElement("a");
    anchor.href = URL.createObjectURL(blob);
    anchor.download = "effectors.json";
    anchor.click();
    URL.revokeObjectURL(anchor.href);
  });
  panel.querySelector<HTMLInputElement>("#import-input")!
    .addEventListener("change", async (event) => {
      const input = event.target as HTMLInputElement;
      const file = input.files?.[0];
      if (!file) return;
      try {
        controller.importJson(await file.text());
      } catch (error) {
        controller.session.validationMessage = String(error);
      }
      input.value = "";
      refresh();
      onMutate();
    });
  return refresh;
}

async function start(): Promise<void> {
  const useMock = new URLSearchParams(location.search).get("mock") === "1";
  const skeleton = await loadSkeleton(useMock);
  const connection: SolverConnection = useMock
    ? new MockSolverConnection(skeleton)
    : new WebSocketSolverConnection(
        `${SERVICE_BASE.replace(/^http/, "ws")}/v1/stream`);
  const controller = new PoseStudioController(skeleton, connection);
  const viewport = new Viewport(
    controller,
    document.getElementById("viewport")!,
    document.getElementById("banner")!,
  );
  const refreshPanel = buildPanel(controller, document.getElementById("panel")!,
                                  () => viewport.syncGizmos());
  controller.onStatus(() => {
    viewport.syncGizmos();
    refreshPanel();
  });
  viewport.syncGizmos();
  controller.requestSolve();
}

start().catch((error) => {
  document.getElementById("banner")!.textContent = `startup failed: ${error}`;
  document.getElementById("banner")!.style.display = "block";
});
