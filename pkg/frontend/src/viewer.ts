// Canvas slice viewer: streams one LA PNG per interaction, composites the
// overlay client-side, and maps pointer events back to voxel coordinates.

import { AnnotatorApi } from "./api.js";
import { compositeLA, MASK_STYLE, OverlayStyle, PREVIEW_STYLE } from "./overlay.js";
import type { Axis } from "./types.js";

const PLANE_DIMS: Record<Axis, [number, number]> = {
  z: [0, 1], // width <- x, height <- y
  y: [0, 2],
  x: [1, 2],
};

export class SliceViewer {
  readonly canvas: HTMLCanvasElement;
  private api: AnnotatorApi;
  private sessionId: string;
  private dims: [number, number, number];
  axis: Axis = "z";
  index = 0;
  preview = false;
  overlay = true;
  scale = 1;
  private generation = 0;

  constructor(
    canvas: HTMLCanvasElement,
    api: AnnotatorApi,
    sessionId: string,
    dims: [number, number, number],
  ) {
    this.canvas = canvas;
    this.api = api;
    this.sessionId = sessionId;
    this.dims = dims;
    this.index = Math.floor(dims[2] / 2);
  }

  sliceCount(): number {
    return this.dims[{ x: 0, y: 1, z: 2 }[this.axis]];
  }

  setAxis(axis: Axis): void {
    this.axis = axis;
    this.index = Math.min(this.index, this.sliceCount() - 1);
  }

  /** Canvas pixel -> in-plane (u, v) voxel coordinates, or null outside. */
  planeCoords(px: number, py: number): [number, number] | null {
    const [wAxis, hAxis] = PLANE_DIMS[this.axis];
    const w = this.dims[wAxis];
    const h = this.dims[hAxis];
    const u = Math.floor(px / this.scale);
    const v = Math.floor(py / this.scale);
    if (u < 0 || u >= w || v < 0 || v >= h) {
      return null;
    }
    return [u, v];
  }

  async refresh(): Promise<void> {
    const gen = ++this.generation;
    const url = this.api.sliceUrl(this.sessionId, this.axis, this.index,
                                  this.overlay, this.preview);
    const resp = await fetch(url);
    if (!resp.ok) {
      throw new Error(`slice fetch failed: ${resp.status}`);
    }
    const blob = await resp.blob();
    const bitmap = await createImageBitmap(blob);
    if (gen !== this.generation) {
      return; // a newer request already landed
    }
    const w = bitmap.width;
    const h = bitmap.height;
    const work = document.createElement("canvas");
    work.width = w;
    work.height = h;
    const wctx = work.getContext("2d")!;
    wctx.drawImage(bitmap, 0, 0);
    const img = wctx.getImageData(0, 0, w, h);
    const style: OverlayStyle = this.preview ? PREVIEW_STYLE : MASK_STYLE;
    compositeLA(img.data, style);
    wctx.putImageData(img, 0, 0);

    this.scale = Math.max(1, Math.floor(Math.min(768 / w, 768 / h)));
    this.canvas.width = w * this.scale;
    this.canvas.height = h * this.scale;
    const ctx = this.canvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(work, 0, 0, this.canvas.width, this.canvas.height);
  }
}
