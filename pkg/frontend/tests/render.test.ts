import { describe, expect, it } from "vitest";

import { OrbitCamera } from "../src/camera";
import { Snapshot, TrackingSampleDto } from "../src/protocol";
import { buildPrimitives } from "../src/render";
import { SceneModel } from "../src/scene";

function snapshot(partial: Partial<Snapshot> = {}): Snapshot {
  return {
    state: "navigating",
    volume: {},
    fiducials_patient_mm: [
      [0, 104, 30],
      [-62, 58, 44],
      [66, 47, 38],
    ],
    calibration: null,
    registration: {
      world_from_patient: { rotation_wxyz: [1, 0, 0, 0], translation_mm: [0, 0, 0] },
      fre_rms_mm: 0.1,
    },
    model_visible: true,
    opacity: 1,
    annotations: [],
    outline_in_progress_mm: null,
    last_seq: 5,
    scene: {
      tumor_center_mm: [10, 20, 0],
      tumor_semiaxes_mm: [35, 30, 30],
      fiducial_radius_mm: 3,
      frame_anchors_mm: { nose_bridge: [0, 95, 18] },
      stations_mm: [[3000, 3000, 2500]],
      room_extent_m: [6, 6],
    },
    ...partial,
  };
}

function sample(trackerId: string, pose: TrackingSampleDto["pose"]): TrackingSampleDto {
  return {
    time_s: 0,
    tracker_id: trackerId,
    pose,
    visible_station_ids: pose ? [0, 1] : [],
    position_sigma_mm: pose ? 0.35 : null,
  };
}

function camera(): OrbitCamera {
  const cam = new OrbitCamera(800, 600);
  cam.target = [0, 0, 0];
  cam.distance = 1500;
  return cam;
}

describe("buildPrimitives", () => {
  it("is idempotent: same inputs produce an identical primitive list", () => {
    const scene = new SceneModel();
    scene.applySnapshot(snapshot());
    scene.applySample(sample("pointer", {
      rotation_wxyz: [1, 0, 0, 0], translation_mm: [100, 0, 0],
    }), 1000);
    const cam = camera();
    const a = buildPrimitives(scene, cam, 1100);
    const b = buildPrimitives(scene, cam, 1100);
    expect(b).toEqual(a);
  });

  it("draws the tumor at its patient-frame position under identity registration", () => {
    const scene = new SceneModel();
    scene.applySnapshot(snapshot());
    const cam = camera();
    cam.target = [10, 20, 0];
    const prims = buildPrimitives(scene, cam, 0);
    const rings = prims.filter((p) => p.type === "polyline" && p.color === "#d9534f");
    expect(rings.length).toBe(3);
    // The tumor center projects to the canvas center since it is the target;
    // ring points must straddle it on both axes.
    const xs = rings.flatMap((r) => r.points.map((pt) => pt[0]));
    const ys = rings.flatMap((r) => r.points.map((pt) => pt[1]));
    expect(Math.min(...xs)).toBeLessThan(400);
    expect(Math.max(...xs)).toBeGreaterThan(400);
    expect(Math.min(...ys)).toBeLessThan(300);
    expect(Math.max(...ys)).toBeGreaterThan(300);
  });

  it("shifts patient content by the registration transform", () => {
    const scene = new SceneModel();
    scene.applySnapshot(snapshot());
    const cam = camera();
    const before = buildPrimitives(scene, cam, 0)
      .filter((p) => p.color === "#f0ad4e")
      .map((p) => p.points[0]);

    const moved = snapshot({
      registration: {
        world_from_patient: {
          rotation_wxyz: [1, 0, 0, 0],
          translation_mm: [200, 0, 0],
        },
        fre_rms_mm: 0.1,
      },
    });
    scene.applySnapshot(moved);
    const after = buildPrimitives(scene, cam, 0)
      .filter((p) => p.color === "#f0ad4e")
      .map((p) => p.points[0]);
    expect(after.length).toBe(before.length);
    // All fiducial dots must move coherently (same direction on screen).
    for (let i = 0; i < after.length; i++) {
      expect(after[i][0]).not.toBeCloseTo(before[i][0], 1);
    }
  });

  it("hides the tumor when model visibility is off", () => {
    const scene = new SceneModel();
    scene.applySnapshot(snapshot({ model_visible: false }));
    const prims = buildPrimitives(scene, camera(), 0);
    expect(prims.filter((p) => p.color === "#d9534f")).toHaveLength(0);
  });

  it("greys the pointer on stale data and flags dropout", () => {
    const scene = new SceneModel();
    scene.applySnapshot(snapshot());
    const cam = camera();

    scene.applySample(sample("pointer", {
      rotation_wxyz: [1, 0, 0, 0], translation_mm: [50, 0, 0],
    }), 0);
    const stalePrims = buildPrimitives(scene, cam, 5000); // 5 s later: stale
    const stalePointer = stalePrims.find((p) => p.type === "text" && p.text === "pointer");
    expect(stalePointer?.color).toBe("#777777");

    scene.applySample(sample("pointer", null), 5000);
    const dropoutPrims = buildPrimitives(scene, cam, 5000);
    expect(dropoutPrims.some((p) => p.type === "text" && p.text?.includes("dropout"))).toBe(true);
  });

  it("renders risk zones as closed polylines with labels", () => {
    const scene = new SceneModel();
    scene.applySnapshot(snapshot({
      annotations: [{
        id: "rz-1", kind: "risk_zone", label: "vessel", author: "remote",
        points_mm: [[0, 0, 0], [30, 0, 0], [0, 30, 0]],
      }],
    }));
    const prims = buildPrimitives(scene, camera(), 0);
    const zone = prims.find((p) => p.type === "polyline" && p.color === "#ff5f9e");
    expect(zone?.closed).toBe(true);
    expect(prims.some((p) => p.type === "text" && p.text === "vessel")).toBe(true);
  });
});
