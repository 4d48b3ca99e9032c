import { describe, expect, it, vi } from "vitest";

import { AnnotatorApi, StaleRevisionError } from "../src/api.js";
import { debounce } from "../src/debounce.js";
import { compositeLA, MASK_STYLE, windowPixels } from "../src/overlay.js";
import { brushVoxels, EditBatcher, SessionController } from "../src/session.js";
import type { OpenSessionResponse } from "../src/types.js";

describe("debounce", () => {
  it("emits at most one trailing call per window", () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const push = debounce((v: number) => calls.push(v), 150);
    for (let i = 0; i < 20; i++) {
      push(i);
      vi.advanceTimersByTime(10); // 20 slider moves 10 ms apart
    }
    vi.advanceTimersByTime(150);
    expect(calls).toEqual([19]); // only the final value, once
    vi.useRealTimers();
  });

  it("separated bursts each fire once", () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const push = debounce((v: number) => calls.push(v), 150);
    push(1);
    vi.advanceTimersByTime(200);
    push(2);
    push(3);
    vi.advanceTimersByTime(200);
    expect(calls).toEqual([1, 3]);
    vi.useRealTimers();
  });
});

describe("overlay compositing", () => {
  it("keeps unmasked pixels gray and washes masked ones", () => {
    // two pixels: gray 100 unmasked, gray 100 masked
    const data = new Uint8ClampedArray([100, 0, 0, 0, 100, 0, 0, 255]);
    compositeLA(data, MASK_STYLE);
    expect([...data.slice(0, 4)]).toEqual([100, 100, 100, 255]);
    const [r, g, b, a] = [...data.slice(4, 8)];
    expect(a).toBe(255);
    expect(r).toBeGreaterThan(100); // red wash
    expect(b).toBeLessThan(100);
    expect(g).toBeLessThan(100);
  });

  it("windowPixels maps the range onto 0..255", () => {
    const out = windowPixels([[0, 5], [10, 20]], 0, 20);
    expect(out[0]).toBe(0);
    expect(out[4 * 3]).toBe(255);
    expect(out[3]).toBe(255); // opaque alpha
  });
});

describe("brushVoxels", () => {
  it("maps plane coordinates per axis and clips at borders", () => {
    const dims: [number, number, number] = [8, 8, 4];
    const hits = brushVoxels("z", 2, 0, 0, 1, dims);
    expect(hits).toHaveLength(4); // corner clipped from 9 to 4
    for (const [, , z] of hits) {
      expect(z).toBe(2);
    }
    const yHits = brushVoxels("y", 3, 1, 1, 0, dims);
    expect(yHits).toEqual([[1, 3, 1]]);
    const xHits = brushVoxels("x", 5, 2, 3, 0, dims);
    expect(xHits).toEqual([[5, 2, 3]]);
  });
});

describe("EditBatcher", () => {
  it("dedupes voxels and produces the inverse batch", () => {
    const batch = new EditBatcher("paint");
    batch.add([1, 2, 3]);
    batch.add([1, 2, 3]);
    batch.add([4, 5, 6]);
    expect(batch.size).toBe(2);
    const flushed = batch.flush();
    expect(flushed.voxels).toHaveLength(2);
    expect(batch.size).toBe(0);
    const inverse = batch.inverse(flushed);
    expect(inverse.op).toBe("erase");
    expect(inverse.voxels).toEqual(flushed.voxels);
  });
});

function mockFetch(handler: (url: string, init?: RequestInit) => unknown) {
  return vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
    const out = handler(String(url), init);
    if (out instanceof Response) {
      return out;
    }
    return new Response(JSON.stringify(out), {
      status: 200,
      headers: { "content-type": "application/json" },
    });
  }) as unknown as typeof fetch;
}

const OPENED: OpenSessionResponse = {
  session_id: "s1",
  case_id: "case_000",
  dims: [8, 8, 8],
  spacing: [1, 1, 1],
  revision: 0,
  threshold_fraction: 0.97,
  threshold_mode: "max",
  seeds: [],
};

describe("SessionController", () => {
  it("tracks revisions across mutations", async () => {
    let revision = 0;
    const fetchImpl = mockFetch((url, init) => {
      if (url.endsWith("/open")) {
        return OPENED;
      }
      const body = JSON.parse(String(init?.body ?? "{}"));
      expect(body.revision).toBe(revision);
      revision += 1;
      if (url.endsWith("/threshold")) {
        return { threshold_value: 123.0, voxels_selected: 10, revision };
      }
      if (url.endsWith("/grow")) {
        return { mask_voxels: 42, seeds: [[1, 1, 1]], revision };
      }
      return { revision, mask_voxels: 40 };
    });
    const api = new AnnotatorApi("http://unit", fetchImpl);
    const session = await SessionController.open(api, "case_000");
    await session.setThreshold(0.95);
    await session.grow();
    await session.applyEdit("erase", [[0, 0, 0]]);
    expect(session.revision).toBe(3);
    expect(session.maskVoxels).toBe(40);
  });

  it("retries once on a stale revision", async () => {
    const conflicts: number[] = [];
    let first = true;
    const fetchImpl = mockFetch((url) => {
      if (url.endsWith("/open")) {
        return OPENED;
      }
      if (first) {
        first = false;
        return new Response(
          JSON.stringify({ detail: { error: "stale revision", current: 5 } }),
          { status: 409 },
        );
      }
      return { mask_voxels: 7, seeds: [], revision: 6 };
    });
    const api = new AnnotatorApi("http://unit", fetchImpl);
    const session = await SessionController.open(api, "case_000", {
      onConflict: (rev) => conflicts.push(rev),
    });
    const out = await session.grow();
    expect(out.revision).toBe(6);
    expect(session.revision).toBe(6);
    expect(conflicts).toEqual([5]);
  });

  it("surfaces server errors as exceptions", async () => {
    const fetchImpl = mockFetch((url) => {
      if (url.endsWith("/open")) {
        return OPENED;
      }
      return new Response(JSON.stringify({ detail: "seed (9,9,9) outside dims" }),
                          { status: 400 });
    });
    const api = new AnnotatorApi("http://unit", fetchImpl);
    const session = await SessionController.open(api, "case_000");
    await expect(session.addSeed([9, 9, 9])).rejects.toThrow(/outside dims/);
  });

  it("StaleRevisionError carries the server revision", () => {
    const err = new StaleRevisionError(12);
    expect(err.current).toBe(12);
  });
});
