/** DOM scaffolding for the console: buttons, sliders, status bar, toasts. */

export interface UiElements {
  root: HTMLElement;
  canvas: HTMLCanvasElement;
  status: HTMLElement;
  stateLabel: HTMLElement;
  staleBadge: HTMLElement;
  seqLabel: HTMLElement;
  toasts: HTMLElement;
  banner: HTMLElement;
  buttons: Record<string, HTMLButtonElement>;
  opacity: HTMLInputElement;
  drawMode: HTMLInputElement;
  annotationList: HTMLElement;
}

const WORKFLOW_BUTTONS: [string, string][] = [
  ["load_volume", "Load Volume"],
  ["detect_fiducials", "Detect Fiducials"],
  ["calibrate", "Calibrate Pointer"],
  ["register", "Register"],
  ["start_navigation", "Start Navigation"],
  ["reset", "Reset"],
  ["toggle_model_visibility", "Toggle Model"],
];

const VIEW_BUTTONS: [string, string][] = [
  ["view_axial", "Axial"],
  ["view_sagittal", "Sagittal"],
  ["view_coronal", "Coronal"],
  ["view_orbit", "Orbit"],
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

export function buildUi(root: HTMLElement): UiElements {
  root.innerHTML = "";
  const panel = el("div", { class: "panel" });
  const buttons: Record<string, HTMLButtonElement> = {};
  for (const [name, label] of [...WORKFLOW_BUTTONS, ...VIEW_BUTTONS]) {
    const b = el("button", { "data-testid": `btn-${name}` }, label);
    buttons[name] = b;
    panel.appendChild(b);
  }

  const opacity = el("input", {
    type: "range", min: "0", max: "1", step: "0.05", value: "1",
    "data-testid": "opacity-slider",
  });
  panel.appendChild(el("label", {}, "Opacity"));
  panel.appendChild(opacity);

  const drawMode = el("input", { type: "checkbox", "data-testid": "draw-mode" });
  const drawLabel = el("label", {}, "Draw risk zone");
  drawLabel.prepend(drawMode);
  panel.appendChild(drawLabel);

  const annotationList = el("ul", { class: "annotations", "data-testid": "annotation-list" });
  panel.appendChild(el("div", {}, "Annotations"));
  panel.appendChild(annotationList);

  const canvas = el("canvas", { width: "800", height: "600", "data-testid": "scene-canvas" });
  const banner = el("div", { class: "banner", "data-testid": "error-banner", hidden: "hidden" });
  const toasts = el("div", { class: "toasts", "data-testid": "toasts" });

  const status = el("div", { class: "status", "data-testid": "status-bar" });
  const stateLabel = el("span", { "data-testid": "session-state" }, "disconnected");
  const staleBadge = el("span", { "data-testid": "stale-badge", hidden: "hidden" }, "STALE");
  const seqLabel = el("span", { "data-testid": "seq-label" }, "seq 0");
  status.append("state: ", stateLabel, " | ", seqLabel, " ", staleBadge);

  const viewport = el("div", { class: "viewport" });
  viewport.append(banner, canvas, status, toasts);
  root.append(panel, viewport);
  return {
    root, canvas, status, stateLabel, staleBadge, seqLabel, toasts, banner,
    buttons, opacity, drawMode, annotationList,
  };
}

export function showToast(ui: UiElements, message: string, kind: "info" | "error" = "info"): void {
  const toast = el("div", { class: `toast ${kind}`, "data-testid": "toast" }, message);
  ui.toasts.appendChild(toast);
  setTimeout(() => toast.remove(), 4000);
}

export function showBanner(ui: UiElements, message: string): void {
  ui.banner.textContent = message;
  ui.banner.removeAttribute("hidden");
}

export function clearBanner(ui: UiElements): void {
  ui.banner.setAttribute("hidden", "hidden");
}
