/** Wire protocol types and validation (schema v1, shared with the service). */

import type { Transform, Vec3 } from "./transforms";

export const PROTOCOL_VERSION = 1;

export interface WireMessage {
  v: number;
  seq: number;
  kind: string;
  payload: Record<string, unknown>;
  in_reply_to?: number;
}

export interface AnnotationDto {
  id: string;
  kind: "point" | "polyline" | "risk_zone";
  points_mm: Vec3[];
  label: string;
  author: "local" | "remote";
}

export interface SceneFacts {
  tumor_center_mm: Vec3;
  tumor_semiaxes_mm: Vec3;
  fiducial_radius_mm: number;
  frame_anchors_mm: Record<string, Vec3>;
  stations_mm: Vec3[];
  room_extent_m: [number, number];
  volume_bounds_mm?: [Vec3, Vec3];
}

export interface Snapshot {
  state: string;
  volume: Record<string, unknown> | null;
  fiducials_patient_mm: Vec3[] | null;
  calibration: Record<string, unknown> | null;
  registration: { world_from_patient: Transform; fre_rms_mm: number } | null;
  model_visible: boolean;
  opacity: number;
  annotations: AnnotationDto[];
  outline_in_progress_mm: Vec3[] | null;
  last_seq: number;
  scene: SceneFacts | null;
}

export interface TrackingSampleDto {
  time_s: number;
  tracker_id: string;
  pose: Transform | null;
  visible_station_ids: number[];
  position_sigma_mm: number | null;
}

export class ProtocolError extends Error {}

/** Parse one server frame; throws ProtocolError on version or shape problems. */
export function parseServerMessage(raw: string): WireMessage {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch (e) {
    throw new ProtocolError(`malformed frame: ${e}`);
  }
  if (typeof msg !== "object" || msg === null) {
    throw new ProtocolError("frame is not a JSON object");
  }
  const m = msg as Record<string, unknown>;
  if (m.v !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported protocol version ${String(m.v)}`);
  }
  if (typeof m.seq !== "number" || typeof m.kind !== "string") {
    throw new ProtocolError("frame missing seq or kind");
  }
  if (typeof m.payload !== "object" || m.payload === null) {
    throw new ProtocolError("frame missing payload");
  }
  return m as unknown as WireMessage;
}

export function makeClientMessage(
  kind: "command" | "annotation_event",
  payload: Record<string, unknown>,
  seq: number,
): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, seq, kind, payload });
}
