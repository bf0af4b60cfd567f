/** Minimal rigid-transform math for placing wire data in the 3D view. */

export type Vec3 = [number, number, number];

export interface Transform {
  rotation_wxyz: [number, number, number, number];
  translation_mm: Vec3;
}

export const IDENTITY: Transform = {
  rotation_wxyz: [1, 0, 0, 0],
  translation_mm: [0, 0, 0],
};

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return n > 0 ? scale(a, 1 / n) : [0, 0, 0];
}

/** Rotate v by the unit quaternion (w, x, y, z). */
export function quatRotate(q: [number, number, number, number], v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  // v' = v + 2 w (u x v) + 2 (u x (u x v)), u = (x, y, z)
  const u: Vec3 = [x, y, z];
  const uv = cross(u, v);
  const uuv = cross(u, uv);
  return add(v, add(scale(uv, 2 * w), scale(uuv, 2)));
}

export function applyTransform(t: Transform, p: Vec3): Vec3 {
  return add(quatRotate(t.rotation_wxyz, p), t.translation_mm);
}

export function invertTransform(t: Transform): Transform {
  const [w, x, y, z] = t.rotation_wxyz;
  const conj: [number, number, number, number] = [w, -x, -y, -z];
  const back = quatRotate(conj, t.translation_mm);
  return { rotation_wxyz: conj, translation_mm: [-back[0], -back[1], -back[2]] };
}
