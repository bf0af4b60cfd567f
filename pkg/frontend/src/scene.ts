/** Scene model: purely a projection of received wire data (no client physics). */

import { AnnotationDto, Snapshot, TrackingSampleDto } from "./protocol";
import { Transform } from "./transforms";

export const STALE_AFTER_MS = 1000;

export interface TrackerState {
  sample: TrackingSampleDto;
  receivedAtMs: number;
}

export class SceneModel {
  snapshot: Snapshot | null = null;
  trackers = new Map<string, TrackerState>();

  applySnapshot(snapshot: Snapshot): void {
    this.snapshot = snapshot;
  }

  applySample(sample: TrackingSampleDto, nowMs: number): void {
    this.trackers.set(sample.tracker_id, { sample, receivedAtMs: nowMs });
  }

  worldFromPatient(): Transform | null {
    return this.snapshot?.registration?.world_from_patient ?? null;
  }

  annotations(): AnnotationDto[] {
    return this.snapshot?.annotations ?? [];
  }

  /** True when the given tracker has not reported for more than a second. */
  isStale(trackerId: string, nowMs: number): boolean {
    const t = this.trackers.get(trackerId);
    if (!t) return true;
    return nowMs - t.receivedAtMs > STALE_AFTER_MS;
  }

  anyStale(nowMs: number): boolean {
    if (this.trackers.size === 0) return true;
    return ["glasses", "pointer"].some((id) => this.isStale(id, nowMs));
  }
}
