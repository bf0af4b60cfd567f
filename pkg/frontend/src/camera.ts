/** Orbit camera with a pinhole projection.
 *
 * The projection matrix is exposed so a test can recompute the same
 * world-to-pixel mapping independently and compare results.
 */

import { Vec3, add, cross, dot, normalize, scale, sub } from "./transforms";

export type ViewPreset = "axial" | "sagittal" | "coronal" | "orbit";

export interface ProjectedPoint {
  x: number;
  y: number;
  depth: number;
  visible: boolean;
}

export class OrbitCamera {
  target: Vec3 = [0, 0, 0];
  distance = 1200;
  yawRad = Math.PI / 4;
  pitchRad = Math.PI / 6;
  fovYRad = Math.PI / 4;

  constructor(
    public widthPx = 800,
    public heightPx = 600,
  ) {}

  eye(): Vec3 {
    const cp = Math.cos(this.pitchRad);
    const offset: Vec3 = [
      this.distance * cp * Math.cos(this.yawRad),
      this.distance * cp * Math.sin(this.yawRad),
      this.distance * Math.sin(this.pitchRad),
    ];
    return add(this.target, offset);
  }

  /** Orthonormal camera basis: right, up, forward (forward points at the target). */
  basis(): { right: Vec3; up: Vec3; forward: Vec3 } {
    const eye = this.eye();
    const forward = normalize(sub(this.target, eye));
    let worldUp: Vec3 = [0, 0, 1];
    if (Math.abs(dot(forward, worldUp)) > 0.999) worldUp = [0, 1, 0];
    const right = normalize(cross(forward, worldUp));
    const up = cross(right, forward);
    return { right, up, forward };
  }

  focalLengthPx(): number {
    return this.heightPx / 2 / Math.tan(this.fovYRad / 2);
  }

  project(p: Vec3): ProjectedPoint {
    const { right, up, forward } = this.basis();
    const d = sub(p, this.eye());
    const zc = dot(d, forward);
    if (zc <= 1e-6) {
      return { x: 0, y: 0, depth: zc, visible: false };
    }
    const fl = this.focalLengthPx();
    return {
      x: this.widthPx / 2 + (fl * dot(d, right)) / zc,
      y: this.heightPx / 2 - (fl * dot(d, up)) / zc,
      depth: zc,
      visible: true,
    };
  }

  /** Ray through a pixel, for picking points on a scene plane. */
  unprojectRay(xPx: number, yPx: number): { origin: Vec3; dir: Vec3 } {
    const { right, up, forward } = this.basis();
    const fl = this.focalLengthPx();
    const xc = (xPx - this.widthPx / 2) / fl;
    const yc = (this.heightPx / 2 - yPx) / fl;
    const dir = normalize(add(add(scale(right, xc), scale(up, yc)), forward));
    return { origin: this.eye(), dir };
  }

  orbit(dYaw: number, dPitch: number): void {
    this.yawRad += dYaw;
    const limit = Math.PI / 2 - 0.05;
    this.pitchRad = Math.max(-limit, Math.min(limit, this.pitchRad + dPitch));
  }

  zoom(factor: number): void {
    this.distance = Math.max(100, Math.min(20000, this.distance * factor));
  }

  /** Clinical presets are relative to the current target. */
  setPreset(preset: ViewPreset): void {
    switch (preset) {
      case "axial": // looking down, patient x to the right
        this.yawRad = -Math.PI / 2;
        this.pitchRad = Math.PI / 2 - 0.06;
        break;
      case "sagittal": // looking along +x
        this.yawRad = Math.PI;
        this.pitchRad = 0.0;
        break;
      case "coronal": // looking along +y
        this.yawRad = -Math.PI / 2;
        this.pitchRad = 0.0;
        break;
      case "orbit":
        this.yawRad = Math.PI / 4;
        this.pitchRad = Math.PI / 6;
        break;
    }
  }
}
