/** Risk-zone drawing: screen path -> patient-frame polygon. */

import { OrbitCamera } from "./camera";
import { AnnotationDto } from "./protocol";
import { Transform, Vec3, dot, invertTransform, applyTransform, sub, add, scale } from "./transforms";

const MIN_SCREEN_STEP_PX = 6;

/** Drop points closer than a few pixels so a drag becomes a clean polygon. */
export function decimatePath(path: [number, number][]): [number, number][] {
  const out: [number, number][] = [];
  for (const p of path) {
    const last = out[out.length - 1];
    if (!last || Math.hypot(p[0] - last[0], p[1] - last[1]) >= MIN_SCREEN_STEP_PX) {
      out.push(p);
    }
  }
  return out;
}

/** Intersect each pixel's view ray with a world plane, then map to patient space. */
export function screenPathToPatientPoints(
  path: [number, number][],
  camera: OrbitCamera,
  worldFromPatient: Transform,
  plane: { point: Vec3; normal: Vec3 },
): Vec3[] {
  const patientFromWorld = invertTransform(worldFromPatient);
  const out: Vec3[] = [];
  for (const [x, y] of path) {
    const { origin, dir } = camera.unprojectRay(x, y);
    const denom = dot(dir, plane.normal);
    if (Math.abs(denom) < 1e-9) continue; // ray parallel to the plane
    const t = dot(sub(plane.point, origin), plane.normal) / denom;
    if (t <= 0) continue;
    const world = add(origin, scale(dir, t));
    out.push(applyTransform(patientFromWorld, world));
  }
  return out;
}

/** Local validation message, or null when the zone is sendable. */
export function validateRiskZone(points: Vec3[]): string | null {
  if (points.length < 3) {
    return `a risk zone needs at least 3 points, got ${points.length}`;
  }
  return null;
}

let zoneCounter = 0;

export function makeRiskZone(points: Vec3[], label = ""): AnnotationDto {
  zoneCounter += 1;
  return {
    id: `rz-${Date.now().toString(36)}-${zoneCounter}`,
    kind: "risk_zone",
    points_mm: points,
    label,
    author: "remote",
  };
}
