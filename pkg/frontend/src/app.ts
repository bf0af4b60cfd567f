/** Console application: wires the wire client, scene, camera, and DOM together.
 *
 * Instantiable under jsdom for tests (inject a WebSocket implementation and a
 * clock); main.ts instantiates it with browser built-ins.
 */

import { decimatePath, makeRiskZone, screenPathToPatientPoints, validateRiskZone } from "./annotate";
import { OrbitCamera, ViewPreset } from "./camera";
import { NavClient, WebSocketFactory } from "./client";
import { buildPrimitives, drawPrimitives, focusOnScene, patientPlaneThroughTumor } from "./render";
import { SceneModel } from "./scene";
import { Snapshot } from "./protocol";
import { UiElements, buildUi, clearBanner, showBanner, showToast } from "./ui";

const POINTER_STEP_MM = 20;

export class ConsoleApp {
  ui: UiElements;
  scene = new SceneModel();
  camera = new OrbitCamera();
  client: NavClient;
  private drawPath: [number, number][] = [];
  private drawing = false;
  private lastFocusKey = "";
  private pointerTarget: [number, number, number] = [150, -300, 1250];

  constructor(
    root: HTMLElement,
    makeSocket: WebSocketFactory,
    private now: () => number = () => Date.now(),
  ) {
    this.ui = buildUi(root);
    this.client = new NavClient(makeSocket, {
      onSnapshot: (snapshot) => this.onSnapshot(snapshot),
      onSample: (sample) => {
        this.scene.applySample(sample, this.now());
        this.render();
      },
      onAnnotation: () => {
        // Drawn zones appear only now, via the broadcast echo (the client
        // already folded it into the snapshot view).
        if (this.client.snapshot) this.renderAnnotationList(this.client.snapshot);
        this.render();
      },
      onRejected: (reason, command) => showToast(this.ui, `${command}: ${reason}`, "error"),
      onServerError: (reason) => showToast(this.ui, reason, "error"),
      onProtocolError: (reason) => showBanner(this.ui, reason),
      onConnected: (up) => {
        this.ui.stateLabel.textContent = up ? "connected" : "disconnected";
        if (!up) showBanner(this.ui, "connection lost");
        else clearBanner(this.ui);
      },
      onWarning: (msg) => console.warn(msg),
    });
    this.bindControls();
  }

  connect(url: string): void {
    this.client.connect(url);
  }

  private onSnapshot(snapshot: Snapshot): void {
    clearBanner(this.ui);
    this.ui.stateLabel.textContent = snapshot.state;
    this.ui.seqLabel.textContent = `seq ${this.client.lastServerSeq}`;
    this.ui.opacity.value = String(snapshot.opacity);
    this.scene.applySnapshot(snapshot);
    // Re-aim the camera when the hologram placement changes (first scene,
    // then whenever a new registration moves patient content in world).
    const focusKey = JSON.stringify([
      snapshot.scene !== null,
      snapshot.registration?.world_from_patient ?? null,
    ]);
    if (snapshot.scene && focusKey !== this.lastFocusKey) {
      focusOnScene(this.scene, this.camera);
      this.lastFocusKey = focusKey;
    }
    this.renderAnnotationList(snapshot);
    this.render();
  }

  private renderAnnotationList(snapshot: Snapshot): void {
    this.ui.annotationList.innerHTML = "";
    for (const a of snapshot.annotations) {
      const li = document.createElement("li");
      li.setAttribute("data-annotation-id", a.id);
      li.textContent = `${a.kind} ${a.label || a.id} (${a.author})`;
      this.ui.annotationList.appendChild(li);
    }
  }

  render(): void {
    const prims = buildPrimitives(this.scene, this.camera, this.now());
    drawPrimitives(this.ui.canvas, prims);
    const stale = this.scene.anyStale(this.now());
    if (stale) this.ui.staleBadge.removeAttribute("hidden");
    else this.ui.staleBadge.setAttribute("hidden", "hidden");
  }

  private bindControls(): void {
    const { buttons, opacity, canvas } = this.ui;
    const commandButtons: Record<string, string> = {
      load_volume: "load_volume",
      detect_fiducials: "detect_fiducials",
      calibrate: "calibrate",
      register: "register",
      start_navigation: "start_navigation",
      reset: "reset",
      toggle_model_visibility: "toggle_model_visibility",
    };
    for (const [btn, command] of Object.entries(commandButtons)) {
      buttons[btn].addEventListener("click", () => this.client.sendCommand(command));
    }
    for (const preset of ["axial", "sagittal", "coronal", "orbit"] as ViewPreset[]) {
      buttons[`view_${preset}`].addEventListener("click", () => {
        this.camera.setPreset(preset);
        this.render();
      });
    }
    opacity.addEventListener("change", () => {
      this.client.sendCommand("set_opacity", { value: Number(opacity.value) });
    });

    canvas.addEventListener("mousedown", (ev) => this.onCanvasDown(ev));
    canvas.addEventListener("mousemove", (ev) => this.onCanvasMove(ev));
    canvas.addEventListener("mouseup", () => this.onCanvasUp());
    canvas.addEventListener("wheel", (ev) => {
      this.camera.zoom(ev.deltaY > 0 ? 1.1 : 0.9);
      this.render();
    });
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  private canvasPoint(ev: MouseEvent): [number, number] {
    // jsdom reports zeroed bounding rects; offsetX covers real browsers.
    return [ev.offsetX ?? 0, ev.offsetY ?? 0];
  }

  private onCanvasDown(ev: MouseEvent): void {
    if (this.ui.drawMode.checked) {
      this.drawing = true;
      this.drawPath = [this.canvasPoint(ev)];
    } else {
      this.drawing = true;
      this.drawPath = [];
      this.lastOrbit = this.canvasPoint(ev);
    }
  }

  private lastOrbit: [number, number] | null = null;

  private onCanvasMove(ev: MouseEvent): void {
    if (!this.drawing) return;
    if (this.ui.drawMode.checked) {
      this.drawPath.push(this.canvasPoint(ev));
    } else if (this.lastOrbit) {
      const [x, y] = this.canvasPoint(ev);
      this.camera.orbit((x - this.lastOrbit[0]) * 0.01, (y - this.lastOrbit[1]) * 0.01);
      this.lastOrbit = [x, y];
      this.render();
    }
  }

  private onCanvasUp(): void {
    const wasDrawing = this.drawing && this.ui.drawMode.checked;
    this.drawing = false;
    this.lastOrbit = null;
    if (!wasDrawing) return;
    this.submitDrawnPath(this.drawPath);
    this.drawPath = [];
  }

  /** Convert a screen path into a risk zone and send it (exposed for tests). */
  submitDrawnPath(path: [number, number][]): void {
    const snapshot = this.client.snapshot;
    if (!snapshot || snapshot.state !== "navigating") {
      showToast(this.ui, "risk zones can only be drawn while navigating", "error");
      return;
    }
    const worldFromPatient = this.scene.worldFromPatient();
    const plane = patientPlaneThroughTumor(this.scene);
    if (!worldFromPatient || !plane) {
      showToast(this.ui, "no registration yet", "error");
      return;
    }
    const points = screenPathToPatientPoints(
      decimatePath(path), this.camera, worldFromPatient, plane,
    );
    const problem = validateRiskZone(points);
    if (problem) {
      showToast(this.ui, problem, "error");
      return;
    }
    this.client.sendAnnotation(makeRiskZone(points));
  }

  private onKey(ev: KeyboardEvent): void {
    const step: Record<string, [number, number, number]> = {
      a: [-POINTER_STEP_MM, 0, 0],
      d: [POINTER_STEP_MM, 0, 0],
      w: [0, POINTER_STEP_MM, 0],
      s: [0, -POINTER_STEP_MM, 0],
      q: [0, 0, POINTER_STEP_MM],
      e: [0, 0, -POINTER_STEP_MM],
    };
    const delta = step[ev.key];
    if (!delta) return;
    this.pointerTarget = [
      this.pointerTarget[0] + delta[0],
      this.pointerTarget[1] + delta[1],
      this.pointerTarget[2] + delta[2],
    ];
    this.client.sendCommand("move_pointer", { position_mm: this.pointerTarget });
  }
}
