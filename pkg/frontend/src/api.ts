// Thin typed client over the annotation service. Every mutation carries
// the revision it was based on; the server answers 409 when it is stale.

import type {
  Axis,
  EditOp,
  EditResponse,
  GrowResponse,
  Histogram,
  OpenSessionResponse,
  SaveResponse,
  ThresholdResponse,
  VolumeInfo,
} from "./types.js";

export class StaleRevisionError extends Error {
  current: number;

  constructor(current: number) {
    super(`stale revision; server is at ${current}`);
    this.current = current;
  }
}

export class ApiError extends Error {
  status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

type FetchLike = typeof fetch;

export class AnnotatorApi {
  private base: string;
  private fetchImpl: FetchLike;

  constructor(base = "", fetchImpl: FetchLike = fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(`${this.base}${path}`, init);
    if (resp.status === 409) {
      const body = await resp.json();
      throw new StaleRevisionError(body.detail?.current ?? -1);
    }
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listVolumes(): Promise<VolumeInfo[]> {
    return this.request<VolumeInfo[]>("/volumes");
  }

  openVolume(id: string): Promise<OpenSessionResponse> {
    return this.post<OpenSessionResponse>(`/volumes/${id}/open`, {});
  }

  histogram(sid: string, bins = 256): Promise<Histogram> {
    return this.request<Histogram>(`/sessions/${sid}/histogram?bins=${bins}`);
  }

  setThreshold(
    sid: string,
    fraction: number,
    mode: string,
    revision: number,
  ): Promise<ThresholdResponse> {
    return this.post<ThresholdResponse>(`/sessions/${sid}/threshold`, {
      fraction,
      mode,
      revision,
    });
  }

  setSeeds(
    sid: string,
    add: number[][],
    remove: number[][],
    revision: number,
  ): Promise<GrowResponse> {
    return this.post<GrowResponse>(`/sessions/${sid}/seeds`, { add, remove, revision });
  }

  grow(sid: string, revision: number): Promise<GrowResponse> {
    return this.post<GrowResponse>(`/sessions/${sid}/grow`, { revision });
  }

  edit(
    sid: string,
    op: EditOp,
    voxels: number[][],
    revision: number,
  ): Promise<EditResponse> {
    return this.post<EditResponse>(`/sessions/${sid}/edits`, { op, voxels, revision });
  }

  save(sid: string, revision: number): Promise<SaveResponse> {
    return this.post<SaveResponse>(`/sessions/${sid}/save`, { revision });
  }

  sliceUrl(sid: string, axis: Axis, index: number, overlay: boolean, preview: boolean): string {
    const flags = `overlay=${overlay ? 1 : 0}&preview=${preview ? 1 : 0}`;
    return `${this.base}/sessions/${sid}/slice?axis=${axis}&index=${index}&${flags}`;
  }
}
