// Client-side session controller: tracks the server revision, applies the
// optimistic-concurrency retry policy, and queues brush edits in batches.
// No segmentation math happens here; every mask change is a server call.

import { AnnotatorApi, StaleRevisionError } from "./api.js";
import type {
  EditOp,
  GrowResponse,
  OpenSessionResponse,
  SaveResponse,
  ThresholdResponse,
} from "./types.js";

export interface SessionEvents {
  onRevision?: (revision: number) => void;
  onConflict?: (serverRevision: number) => void;
}

export class SessionController {
  readonly api: AnnotatorApi;
  readonly sessionId: string;
  readonly caseId: string;
  readonly dims: [number, number, number];
  revision: number;
  thresholdFraction: number;
  thresholdMode: string;
  lastThreshold: ThresholdResponse | null = null;
  maskVoxels = 0;
  private events: SessionEvents;

  constructor(api: AnnotatorApi, opened: OpenSessionResponse, events: SessionEvents = {}) {
    this.api = api;
    this.sessionId = opened.session_id;
    this.caseId = opened.case_id;
    this.dims = opened.dims;
    this.revision = opened.revision;
    this.thresholdFraction = opened.threshold_fraction;
    this.thresholdMode = opened.threshold_mode;
    this.events = events;
  }

  static async open(api: AnnotatorApi, volumeId: string, events: SessionEvents = {}) {
    const opened = await api.openVolume(volumeId);
    return new SessionController(api, opened, events);
  }

  private bump(revision: number): void {
    this.revision = revision;
    this.events.onRevision?.(revision);
  }

  /** Run a revision-carrying mutation; on 409 refresh the revision and
   * retry once (the server state changed under us). */
  private async withRetry<T extends { revision: number }>(
    op: (revision: number) => Promise<T>,
  ): Promise<T> {
    try {
      const out = await op(this.revision);
      this.bump(out.revision);
      return out;
    } catch (err) {
      if (err instanceof StaleRevisionError) {
        this.events.onConflict?.(err.current);
        const out = await op(err.current);
        this.bump(out.revision);
        return out;
      }
      throw err;
    }
  }

  async setThreshold(fraction: number, mode = this.thresholdMode): Promise<ThresholdResponse> {
    const out = await this.withRetry((rev) =>
      this.api.setThreshold(this.sessionId, fraction, mode, rev),
    );
    this.thresholdFraction = fraction;
    this.thresholdMode = mode;
    this.lastThreshold = out;
    return out;
  }

  async addSeed(voxel: [number, number, number]): Promise<GrowResponse> {
    return this.withRetry((rev) => this.api.setSeeds(this.sessionId, [voxel], [], rev));
  }

  async removeSeed(voxel: [number, number, number]): Promise<GrowResponse> {
    return this.withRetry((rev) => this.api.setSeeds(this.sessionId, [], [voxel], rev));
  }

  async grow(): Promise<GrowResponse> {
    const out = await this.withRetry((rev) => this.api.grow(this.sessionId, rev));
    this.maskVoxels = out.mask_voxels;
    return out;
  }

  async applyEdit(op: EditOp, voxels: number[][]): Promise<void> {
    if (voxels.length === 0) {
      return;
    }
    const out = await this.withRetry((rev) =>
      this.api.edit(this.sessionId, op, voxels, rev),
    );
    this.maskVoxels = out.mask_voxels;
  }

  async save(): Promise<SaveResponse> {
    return this.withRetry((rev) => this.api.save(this.sessionId, rev));
  }
}

/** Collects brush strokes into per-op voxel batches so one drag emits one
 * edit request (plus its inverse for undo). */
export class EditBatcher {
  private op: EditOp;
  private voxels = new Map<string, [number, number, number]>();

  constructor(op: EditOp) {
    this.op = op;
  }

  get editOp(): EditOp {
    return this.op;
  }

  add(voxel: [number, number, number]): void {
    this.voxels.set(voxel.join(","), voxel);
  }

  get size(): number {
    return this.voxels.size;
  }

  flush(): { op: EditOp; voxels: number[][] } {
    const out = { op: this.op, voxels: [...this.voxels.values()] as number[][] };
    this.voxels.clear();
    return out;
  }

  /** The batch that exactly undoes this one. */
  inverse(batch: { op: EditOp; voxels: number[][] }): { op: EditOp; voxels: number[][] } {
    return { op: batch.op === "paint" ? "erase" : "paint", voxels: batch.voxels };
  }
}

/** Voxels covered by a square brush of the given radius centred on a voxel,
 * clipped to the slice bounds, mapped to (x, y, z) for the given axis. */
export function brushVoxels(
  axis: "x" | "y" | "z",
  index: number,
  u: number,
  v: number,
  radius: number,
  dims: [number, number, number],
): [number, number, number][] {
  const [nx, ny, nz] = dims;
  const bounds: Record<string, [number, number]> = {
    z: [nx, ny],
    y: [nx, nz],
    x: [ny, nz],
  };
  const [nu, nv] = bounds[axis];
  const out: [number, number, number][] = [];
  for (let dv = -radius; dv <= radius; dv++) {
    for (let du = -radius; du <= radius; du++) {
      const uu = u + du;
      const vv = v + dv;
      if (uu < 0 || uu >= nu || vv < 0 || vv >= nv) {
        continue;
      }
      if (axis === "z") {
        out.push([uu, vv, index]);
      } else if (axis === "y") {
        out.push([uu, index, vv]);
      } else {
        out.push([index, uu, vv]);
      }
    }
  }
  return out;
}
