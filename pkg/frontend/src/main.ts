// App wiring: volume browser, slice scrubbing on three axes, threshold
// slider over the histogram (debounced), click-to-seed, grow, brush
// corrections with undo, and save.

import { AnnotatorApi, ApiError } from "./api.js";
import { debounce } from "./debounce.js";
import { HistogramView } from "./histogram.js";
import { brushVoxels, EditBatcher, SessionController } from "./session.js";
import { SliceViewer } from "./viewer.js";
import type { Axis, EditOp } from "./types.js";

const THRESHOLD_DEBOUNCE_MS = 150;

type Tool = "seed" | "paint" | "erase";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) {
    throw new Error(`missing element #${id}`);
  }
  return found as T;
}

function toast(message: string, isError = false): void {
  const box = el<HTMLDivElement>("toasts");
  const node = document.createElement("div");
  node.className = `toast${isError ? " error" : ""}`;
  node.textContent = message;
  box.appendChild(node);
  setTimeout(() => node.remove(), 4000);
}

class App {
  api = new AnnotatorApi("");
  session: SessionController | null = null;
  viewer: SliceViewer | null = null;
  histogram = new HistogramView(el<HTMLCanvasElement>("histogram"));
  tool: Tool = "seed";
  brushRadius = 1;
  painting: EditBatcher | null = null;
  undoStack: { op: EditOp; voxels: number[][] }[] = [];

  private pushThreshold = debounce((fraction: number) => {
    void this.applyThreshold(fraction);
  }, THRESHOLD_DEBOUNCE_MS);

  async start(): Promise<void> {
    const volumes = await this.api.listVolumes();
    const list = el<HTMLUListElement>("volume-list");
    list.innerHTML = "";
    for (const vol of volumes) {
      const item = document.createElement("li");
      item.textContent = `${vol.id}  (${vol.dims.join("x")})`;
      item.onclick = () => void this.openVolume(vol.id);
      list.appendChild(item);
    }
    this.bindControls();
  }

  async openVolume(id: string): Promise<void> {
    try {
      this.session = await SessionController.open(this.api, id, {
        onConflict: () => toast("session changed elsewhere; retried on the new revision"),
      });
    } catch (err) {
      toast(`open failed: ${err}`, true);
      return;
    }
    const session = this.session;
    el<HTMLSpanElement>("case-label").textContent = session.caseId;
    this.viewer = new SliceViewer(
      el<HTMLCanvasElement>("slice"), this.api, session.sessionId, session.dims);
    this.histogram.setData(await this.api.histogram(session.sessionId));
    const slider = el<HTMLInputElement>("threshold-slider");
    slider.value = String(session.thresholdFraction);
    this.histogram.setFraction(session.thresholdFraction);
    this.syncSliceControls();
    await this.refresh();
  }

  bindControls(): void {
    const slider = el<HTMLInputElement>("threshold-slider");
    slider.oninput = () => {
      const fraction = Number(slider.value);
      el<HTMLSpanElement>("threshold-label").textContent = fraction.toFixed(3);
      this.histogram.setFraction(fraction);
      this.pushThreshold(fraction);
    };
    el<HTMLInputElement>("slice-slider").oninput = (ev) => {
      if (this.viewer) {
        this.viewer.index = Number((ev.target as HTMLInputElement).value);
        this.viewer.preview = false;
        void this.refresh();
      }
    };
    for (const axis of ["x", "y", "z"] as Axis[]) {
      el<HTMLButtonElement>(`axis-${axis}`).onclick = () => {
        if (this.viewer) {
          this.viewer.setAxis(axis);
          this.syncSliceControls();
          void this.refresh();
        }
      };
    }
    for (const tool of ["seed", "paint", "erase"] as Tool[]) {
      el<HTMLButtonElement>(`tool-${tool}`).onclick = () => {
        this.tool = tool;
        document.querySelectorAll(".tool").forEach((b) => b.classList.remove("active"));
        el(`tool-${tool}`).classList.add("active");
      };
    }
    el<HTMLInputElement>("brush-size").oninput = (ev) => {
      this.brushRadius = Number((ev.target as HTMLInputElement).value);
      el<HTMLSpanElement>("brush-label").textContent = String(this.brushRadius);
    };
    el<HTMLButtonElement>("grow").onclick = () => void this.grow();
    el<HTMLButtonElement>("save").onclick = () => void this.save();
    el<HTMLButtonElement>("undo").onclick = () => void this.undo();
    this.bindCanvas();
  }

  bindCanvas(): void {
    const canvas = el<HTMLCanvasElement>("slice");
    canvas.onpointerdown = (ev) => {
      if (!this.session || !this.viewer) {
        return;
      }
      const coords = this.canvasVoxel(ev);
      if (!coords) {
        return;
      }
      if (this.tool === "seed") {
        void this.addSeed(coords);
        return;
      }
      this.painting = new EditBatcher(this.tool);
      this.stroke(coords);
      canvas.setPointerCapture(ev.pointerId);
    };
    canvas.onpointermove = (ev) => {
      if (!this.painting) {
        return;
      }
      const coords = this.canvasVoxel(ev);
      if (coords) {
        this.stroke(coords);
      }
    };
    canvas.onpointerup = () => void this.finishStroke();
  }

  canvasVoxel(ev: PointerEvent): [number, number, number] | null {
    if (!this.viewer) {
      return null;
    }
    const rect = this.viewer.canvas.getBoundingClientRect();
    const plane = this.viewer.planeCoords(ev.clientX - rect.left, ev.clientY - rect.top);
    if (!plane) {
      return null;
    }
    const [u, v] = plane;
    const idx = this.viewer.index;
    if (this.viewer.axis === "z") {
      return [u, v, idx];
    }
    if (this.viewer.axis === "y") {
      return [u, idx, v];
    }
    return [idx, u, v];
  }

  stroke(voxel: [number, number, number]): void {
    if (!this.painting || !this.viewer || !this.session) {
      return;
    }
    const [x, y, z] = voxel;
    const plane: Record<Axis, [number, number]> = {
      z: [x, y], y: [x, z], x: [y, z],
    };
    const [u, v] = plane[this.viewer.axis];
    for (const hit of brushVoxels(this.viewer.axis, this.viewer.index, u, v,
                                  this.brushRadius, this.session.dims)) {
      this.painting.add(hit);
    }
  }

  async finishStroke(): Promise<void> {
    if (!this.painting || !this.session) {
      return;
    }
    const batch = this.painting.flush();
    const inverse = this.painting.inverse(batch);
    this.painting = null;
    if (batch.voxels.length === 0) {
      return;
    }
    try {
      await this.session.applyEdit(batch.op, batch.voxels);
      this.undoStack.push(inverse);
      await this.refresh();
    } catch (err) {
      toast(`edit failed: ${err}`, true);
    }
  }

  async undo(): Promise<void> {
    const batch = this.undoStack.pop();
    if (!batch || !this.session) {
      return;
    }
    await this.session.applyEdit(batch.op, batch.voxels);
    await this.refresh();
  }

  async applyThreshold(fraction: number): Promise<void> {
    if (!this.session || !this.viewer) {
      return;
    }
    try {
      const out = await this.session.setThreshold(fraction);
      el<HTMLSpanElement>("selected-label").textContent =
        `${out.voxels_selected} voxels >= ${out.threshold_value.toFixed(1)}`;
      this.viewer.preview = true;
      await this.refresh();
    } catch (err) {
      toast(`threshold failed: ${err}`, true);
    }
  }

  async addSeed(voxel: [number, number, number]): Promise<void> {
    if (!this.session) {
      return;
    }
    try {
      const out = await this.session.addSeed(voxel);
      el<HTMLSpanElement>("seeds-label").textContent = `${out.seeds.length} seeds`;
    } catch (err) {
      toast(`seed failed: ${err}`, true);
    }
  }

  async grow(): Promise<void> {
    if (!this.session || !this.viewer) {
      return;
    }
    try {
      const out = await this.session.grow();
      toast(`grown: ${out.mask_voxels} voxels from ${out.seeds.length} seeds`);
      this.undoStack = [];
      this.viewer.preview = false;
      await this.refresh();
    } catch (err) {
      toast(`grow failed: ${err}`, true);
    }
  }

  async save(): Promise<void> {
    if (!this.session) {
      return;
    }
    try {
      const out = await this.session.save();
      toast(`saved ${out.mask_path}`);
    } catch (err) {
      const detail = err instanceof ApiError ? err.message : String(err);
      toast(`save failed: ${detail}`, true);
    }
  }

  syncSliceControls(): void {
    if (!this.viewer) {
      return;
    }
    const slider = el<HTMLInputElement>("slice-slider");
    slider.max = String(this.viewer.sliceCount() - 1);
    slider.value = String(this.viewer.index);
  }

  async refresh(): Promise<void> {
    if (this.viewer) {
      el<HTMLSpanElement>("slice-label").textContent =
        `${this.viewer.axis}=${this.viewer.index}`;
      await this.viewer.refresh();
    }
  }
}

const app = new App();
void app.start();
