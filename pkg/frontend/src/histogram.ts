// Intensity histogram with the draggable threshold marker.

import type { Histogram } from "./types.js";

export class HistogramView {
  private canvas: HTMLCanvasElement;
  private histogram: Histogram | null = null;
  fraction = 0.97;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
  }

  setData(histogram: Histogram): void {
    this.histogram = histogram;
    this.draw();
  }

  setFraction(fraction: number): void {
    this.fraction = fraction;
    this.draw();
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || !this.histogram) {
      return;
    }
    const { width: w, height: h } = this.canvas;
    ctx.clearRect(0, 0, w, h);
    const counts = this.histogram.counts;
    // log scale: vessel voxels are a sliver of the count range
    const maxLog = Math.log1p(Math.max(...counts));
    const barW = w / counts.length;
    ctx.fillStyle = "#5c7fa3";
    counts.forEach((c, i) => {
      const bh = maxLog > 0 ? (Math.log1p(c) / maxLog) * (h - 4) : 0;
      ctx.fillRect(i * barW, h - bh, Math.max(1, barW - 1), bh);
    });
    // threshold marker at fraction-of-max position
    const x = this.fraction * (w - 1);
    ctx.strokeStyle = "#e05540";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, h);
    ctx.stroke();
  }
}
