import { describe, expect, it } from "vitest";

import {
  blendHeatmap,
  normalizeGrid,
  overlayHeatmap,
  upscaleNearest,
} from "../src/heatmap.js";

function grayPixels(width: number, height: number, value = 100): Uint8ClampedArray {
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    out[i * 4] = value;
    out[i * 4 + 1] = value;
    out[i * 4 + 2] = value;
    out[i * 4 + 3] = 255;
  }
  return out;
}

function brightness(pixels: Uint8ClampedArray, x: number, y: number, width: number) {
  const i = (y * width + x) * 4;
  return pixels[i] + pixels[i + 1] + pixels[i + 2];
}

describe("normalizeGrid", () => {
  it("maps a flat grid to mid-scale", () => {
    const out = normalizeGrid([[3, 3], [3, 3]]);
    expect(out).toEqual([[0.5, 0.5], [0.5, 0.5]]);
  });

  it("stretches min..max onto 0..1", () => {
    const out = normalizeGrid([[1, 2], [3, 5]]);
    expect(out[0][0]).toBe(0);
    expect(out[1][1]).toBe(1);
  });
});

describe("upscaleNearest", () => {
  it("replicates each cell without smoothing", () => {
    const out = upscaleNearest([[1, 2]], 2);
    expect(out).toEqual([
      [1, 1, 2, 2],
      [1, 1, 2, 2],
    ]);
  });
});

describe("blendHeatmap / overlayHeatmap", () => {
  it("uniform grids tint the image uniformly", () => {
    const base = grayPixels(8, 8);
    const out = overlayHeatmap(base, [[2, 2], [2, 2]], 4, 8, 8, 0.6);
    const first = [out[0], out[1], out[2]];
    for (let i = 0; i < 8 * 8; i++) {
      expect([out[i * 4], out[i * 4 + 1], out[i * 4 + 2]]).toEqual(first);
    }
  });

  it("zero opacity returns the original pixels", () => {
    const base = grayPixels(8, 8, 37);
    const out = overlayHeatmap(base, [[0, 1], [2, 3]], 4, 8, 8, 0);
    expect(Array.from(out)).toEqual(Array.from(base));
  });

  it("the argmax cell is the visually brightest", () => {
    const grid = [
      [0.1, 0.9],
      [0.3, 0.2],
    ];
    const base = grayPixels(8, 8);
    const out = overlayHeatmap(base, grid, 4, 8, 8, 0.7);
    const hot = brightness(out, 6, 1, 8); // inside cell (0, 1)
    expect(hot).toBeGreaterThan(brightness(out, 1, 1, 8));
    expect(hot).toBeGreaterThan(brightness(out, 1, 6, 8));
    expect(hot).toBeGreaterThan(brightness(out, 6, 6, 8));
  });

  it("rejects mismatched field dimensions", () => {
    const base = grayPixels(8, 8);
    expect(() => blendHeatmap(base, [[1]], 8, 8, 0.5)).toThrow(/does not match/);
  });

  it("rejects mismatched pixel buffers", () => {
    const base = grayPixels(4, 4);
    const heat = upscaleNearest([[1, 0], [0, 1]], 4);
    expect(() => blendHeatmap(base, heat, 8, 8, 0.5)).toThrow(/bytes/);
  });
});
