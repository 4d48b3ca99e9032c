// Compositing of the two-channel slice PNG: luminance carries the windowed
// image, alpha carries the mask. The canvas shows gray pixels with a
// translucent color wash where the mask is set.

export interface OverlayStyle {
  r: number;
  g: number;
  b: number;
  alpha: number; // mask wash opacity in [0, 1]
}

export const MASK_STYLE: OverlayStyle = { r: 255, g: 80, b: 60, alpha: 0.45 };
export const PREVIEW_STYLE: OverlayStyle = { r: 80, g: 160, b: 255, alpha: 0.4 };

/** imageData: RGBA pixels decoded from the LA PNG (gray in RGB, mask in A).
 * Rewrites the buffer in place to composited opaque RGBA. */
export function compositeLA(data: Uint8ClampedArray, style: OverlayStyle): void {
  for (let i = 0; i < data.length; i += 4) {
    const gray = data[i];
    const masked = data[i + 3] > 127;
    if (masked) {
      data[i] = Math.round(gray * (1 - style.alpha) + style.r * style.alpha);
      data[i + 1] = Math.round(gray * (1 - style.alpha) + style.g * style.alpha);
      data[i + 2] = Math.round(gray * (1 - style.alpha) + style.b * style.alpha);
    } else {
      data[i + 1] = gray;
      data[i + 2] = gray;
    }
    data[i + 3] = 255;
  }
}

/** Window/level mapping for raw JSON slices (test + fallback path). */
export function windowPixels(
  pixels: number[][],
  lo: number,
  hi: number,
): Uint8ClampedArray {
  const h = pixels.length;
  const w = h > 0 ? pixels[0].length : 0;
  const span = hi > lo ? hi - lo : 1;
  const out = new Uint8ClampedArray(w * h * 4);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const v = Math.max(0, Math.min(1, (pixels[y][x] - lo) / span));
      const g = Math.round(v * 255);
      const o = (y * w + x) * 4;
      out[o] = g;
      out[o + 1] = g;
      out[o + 2] = g;
      out[o + 3] = 255;
    }
  }
  return out;
}
