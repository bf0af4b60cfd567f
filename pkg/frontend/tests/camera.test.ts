import { describe, expect, it } from "vitest";

import { OrbitCamera } from "../src/camera";
import { Vec3, applyTransform } from "../src/transforms";

/** Independent pinhole projection used as the oracle: builds the same
 * camera matrix from the exposed basis and focal length, then projects
 * with plain matrix arithmetic. */
function oracleProject(camera: OrbitCamera, p: Vec3): [number, number] {
  const eye = camera.eye();
  const { right, up, forward } = camera.basis();
  const fl = camera.focalLengthPx();
  const d: Vec3 = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
  const xc = d[0] * right[0] + d[1] * right[1] + d[2] * right[2];
  const yc = d[0] * up[0] + d[1] * up[1] + d[2] * up[2];
  const zc = d[0] * forward[0] + d[1] * forward[1] + d[2] * forward[2];
  return [camera.widthPx / 2 + (fl * xc) / zc, camera.heightPx / 2 - (fl * yc) / zc];
}

describe("OrbitCamera", () => {
  it("projects the target to the canvas center", () => {
    const cam = new OrbitCamera(800, 600);
    cam.target = [100, -50, 1200];
    const pr = cam.project(cam.target);
    expect(pr.visible).toBe(true);
    expect(pr.x).toBeCloseTo(400, 6);
    expect(pr.y).toBeCloseTo(300, 6);
  });

  it("tumor centroid pixel-projects identically via the oracle camera matrix", () => {
    // Scripted scene: a registration transform places the patient-frame tumor
    // centroid in world; both projections must land on the same pixel.
    const worldFromPatient = {
      rotation_wxyz: [Math.SQRT1_2, 0, 0, Math.SQRT1_2] as [number, number, number, number],
      translation_mm: [250, -150, 1100] as Vec3,
    };
    const tumorPatient: Vec3 = [10, 20, 0];
    const tumorWorld = applyTransform(worldFromPatient, tumorPatient);

    const cam = new OrbitCamera(800, 600);
    cam.target = [200, -100, 1100];
    cam.yawRad = 0.8;
    cam.pitchRad = 0.35;
    cam.distance = 900;

    const pr = cam.project(tumorWorld);
    const [ox, oy] = oracleProject(cam, tumorWorld);
    expect(pr.visible).toBe(true);
    expect(pr.x).toBeCloseTo(ox, 9);
    expect(pr.y).toBeCloseTo(oy, 9);
  });

  it("unproject then intersect recovers the projected point on its plane", () => {
    const cam = new OrbitCamera(640, 480);
    cam.target = [0, 0, 1000];
    const p: Vec3 = [50, 80, 1000];
    const pr = cam.project(p);
    const ray = cam.unprojectRay(pr.x, pr.y);
    // Intersect with the horizontal plane z = 1000.
    const t = (1000 - ray.origin[2]) / ray.dir[2];
    const hit: Vec3 = [
      ray.origin[0] + t * ray.dir[0],
      ray.origin[1] + t * ray.dir[1],
      ray.origin[2] + t * ray.dir[2],
    ];
    expect(hit[0]).toBeCloseTo(p[0], 6);
    expect(hit[1]).toBeCloseTo(p[1], 6);
  });

  it("marks points behind the camera invisible", () => {
    const cam = new OrbitCamera();
    cam.target = [0, 0, 0];
    const eye = cam.eye();
    const behind: Vec3 = [eye[0] * 2, eye[1] * 2, eye[2] * 2];
    expect(cam.project(behind).visible).toBe(false);
  });

  it("presets change the viewing axis", () => {
    const cam = new OrbitCamera();
    cam.target = [0, 0, 0];
    cam.setPreset("axial");
    const axial = cam.basis().forward;
    expect(axial[2]).toBeLessThan(-0.99); // looking down
    cam.setPreset("sagittal");
    const sagittal = cam.basis().forward;
    expect(Math.abs(sagittal[0])).toBeGreaterThan(0.99);
    cam.setPreset("coronal");
    const coronal = cam.basis().forward;
    expect(Math.abs(coronal[1])).toBeGreaterThan(0.99);
  });
});
