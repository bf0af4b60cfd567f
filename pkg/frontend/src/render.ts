/** Scene-to-primitives builder plus a canvas-2D rasterizer.
 *
 * buildPrimitives is pure: calling it twice with the same inputs produces an
 * identical primitive list, which keeps re-rendering idempotent and testable
 * without a real canvas. Patient-frame content is mapped through the
 * session's registration so holograms land where the (simulated) anatomy is.
 */

import { OrbitCamera } from "./camera";
import { SceneModel } from "./scene";
import { Transform, Vec3, add, applyTransform, scale } from "./transforms";

export interface Primitive {
  type: "polyline" | "dot" | "text";
  points: [number, number][];
  color: string;
  closed?: boolean;
  size?: number;
  text?: string;
}

const TUMOR_COLOR = "#d9534f";
const FIDUCIAL_COLOR = "#f0ad4e";
const POINTER_COLOR = "#5bc0de";
const GLASSES_COLOR = "#8e6ac8";
const STALE_COLOR = "#777777";
const ANNOTATION_COLOR = "#ff5f9e";
const FRAME_COLOR = "#5cb85c";
const STATION_COLOR = "#9aa0a6";

function ellipseRing(
  center: Vec3,
  semiaxes: Vec3,
  planeAxes: [number, number],
  segments = 48,
): Vec3[] {
  const pts: Vec3[] = [];
  for (let i = 0; i < segments; i++) {
    const a = (2 * Math.PI * i) / segments;
    const p: Vec3 = [...center];
    p[planeAxes[0]] += semiaxes[planeAxes[0]] * Math.cos(a);
    p[planeAxes[1]] += semiaxes[planeAxes[1]] * Math.sin(a);
    pts.push(p);
  }
  return pts;
}

function projectPath(camera: OrbitCamera, pts: Vec3[]): [number, number][] | null {
  const out: [number, number][] = [];
  for (const p of pts) {
    const pr = camera.project(p);
    if (!pr.visible) return null;
    out.push([round2(pr.x), round2(pr.y)]);
  }
  return out;
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

export function buildPrimitives(scene: SceneModel, camera: OrbitCamera, nowMs: number): Primitive[] {
  const prims: Primitive[] = [];
  const snap = scene.snapshot;
  const mapPatient: (p: Vec3) => Vec3 = (() => {
    const t: Transform | null = scene.worldFromPatient();
    return t ? (p: Vec3) => applyTransform(t, p) : (p: Vec3) => p;
  })();

  if (snap?.scene) {
    for (const st of snap.scene.stations_mm) {
      const pr = camera.project(st);
      if (pr.visible) {
        prims.push({ type: "dot", points: [[round2(pr.x), round2(pr.y)]], color: STATION_COLOR, size: 4 });
      }
    }
    for (const anchor of Object.values(snap.scene.frame_anchors_mm)) {
      const pr = camera.project(mapPatient(anchor));
      if (pr.visible) {
        prims.push({ type: "dot", points: [[round2(pr.x), round2(pr.y)]], color: FRAME_COLOR, size: 3 });
      }
    }
    if (snap.model_visible) {
      const { tumor_center_mm: c, tumor_semiaxes_mm: s } = snap.scene;
      for (const axes of [[0, 1], [0, 2], [1, 2]] as [number, number][]) {
        const ring = ellipseRing(c, s, axes).map(mapPatient);
        const path = projectPath(camera, ring);
        if (path) prims.push({ type: "polyline", points: path, color: TUMOR_COLOR, closed: true });
      }
    }
  }

  for (const f of snap?.fiducials_patient_mm ?? []) {
    const pr = camera.project(mapPatient(f));
    if (pr.visible) {
      prims.push({ type: "dot", points: [[round2(pr.x), round2(pr.y)]], color: FIDUCIAL_COLOR, size: 5 });
    }
  }

  for (const a of scene.annotations()) {
    const path = projectPath(camera, a.points_mm.map(mapPatient));
    if (!path) continue;
    if (a.kind === "point") {
      prims.push({ type: "dot", points: path, color: ANNOTATION_COLOR, size: 5 });
    } else {
      prims.push({
        type: "polyline", points: path, color: ANNOTATION_COLOR, closed: a.kind === "risk_zone",
      });
    }
    prims.push({ type: "text", points: [path[0]], color: ANNOTATION_COLOR, text: a.label || a.id });
  }

  for (const [id, color] of [["pointer", POINTER_COLOR], ["glasses", GLASSES_COLOR]] as const) {
    const tracker = scene.trackers.get(id);
    if (!tracker) continue;
    const stale = scene.isStale(id, nowMs);
    const dropout = tracker.sample.pose === null;
    if (dropout) {
      // Dropout: grey glyph at the last known spot (if any pose was ever seen).
      prims.push({ type: "text", points: [[10, id === "pointer" ? 20 : 36]], color: STALE_COLOR,
                   text: `${id}: dropout` });
      continue;
    }
    const pos = tracker.sample.pose!.translation_mm;
    const pr = camera.project(pos);
    if (pr.visible) {
      const c = stale ? STALE_COLOR : color;
      prims.push({ type: "dot", points: [[round2(pr.x), round2(pr.y)]], color: c, size: 6 });
      prims.push({ type: "text", points: [[round2(pr.x) + 8, round2(pr.y)]], color: c, text: id });
    }
  }

  return prims;
}

/** Rasterize; tolerates a missing 2D context (jsdom) by doing nothing. */
export function drawPrimitives(
  canvas: HTMLCanvasElement,
  prims: Primitive[],
  background = "#101418",
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = background;
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  for (const p of prims) {
    ctx.strokeStyle = p.color;
    ctx.fillStyle = p.color;
    if (p.type === "polyline") {
      ctx.beginPath();
      p.points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
      if (p.closed) ctx.closePath();
      ctx.stroke();
    } else if (p.type === "dot") {
      const r = p.size ?? 3;
      ctx.beginPath();
      ctx.arc(p.points[0][0], p.points[0][1], r, 0, 2 * Math.PI);
      ctx.fill();
    } else {
      ctx.font = "11px sans-serif";
      ctx.fillText(p.text ?? "", p.points[0][0], p.points[0][1]);
    }
  }
}

/** Shift the camera target to the tumor center in world coordinates. */
export function focusOnScene(scene: SceneModel, camera: OrbitCamera): void {
  const snap = scene.snapshot;
  if (!snap?.scene) return;
  const t = scene.worldFromPatient();
  const center = snap.scene.tumor_center_mm;
  camera.target = t ? applyTransform(t, center) : center;
  const s = snap.scene.tumor_semiaxes_mm;
  camera.distance = Math.max(400, 8 * Math.max(s[0], s[1], s[2]));
}

export function patientPlaneThroughTumor(scene: SceneModel): { point: Vec3; normal: Vec3 } | null {
  const snap = scene.snapshot;
  if (!snap?.scene) return null;
  const t = scene.worldFromPatient();
  const centerWorld = t
    ? applyTransform(t, snap.scene.tumor_center_mm)
    : snap.scene.tumor_center_mm;
  // Axial plane through the tumor center: normal along patient z in world frame.
  const zDirWorld: Vec3 = t
    ? (() => {
        const o = applyTransform(t, [0, 0, 0]);
        const z = applyTransform(t, [0, 0, 1]);
        return [z[0] - o[0], z[1] - o[1], z[2] - o[2]] as Vec3;
      })()
    : [0, 0, 1];
  return { point: centerWorld, normal: zDirWorld };
}

export { add, scale };
