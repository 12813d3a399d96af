// Heatmap rendering: patch-resolution attention grids are normalized,
// nearest-neighbor upscaled (patch boundaries stay honest) and alpha-blended
// over the image pixels.  Pure array math so it is testable without a DOM.

export function normalizeGrid(grid: number[][]): number[][] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of grid) {
    for (const v of row) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (hi === lo) {
    return grid.map((row) => row.map(() => 0.5));
  }
  return grid.map((row) => row.map((v) => (v - lo) / (hi - lo)));
}

/** Repeat every grid cell cellSize x cellSize times. */
export function upscaleNearest(grid: number[][], cellSize: number): number[][] {
  const out: number[][] = [];
  for (const row of grid) {
    const expanded: number[] = [];
    for (const v of row) {
      for (let i = 0; i < cellSize; i++) expanded.push(v);
    }
    for (let i = 0; i < cellSize; i++) out.push(expanded);
  }
  return out;
}

const HEAT_RGB: [number, number, number] = [255, 160, 40];

/**
 * Blend a normalized heat value field over RGBA pixels.
 * opacity 0 returns the base pixels unchanged; at fixed opacity the blended
 * brightness is monotone in the heat value, so the argmax cell is brightest.
 */
export function blendHeatmap(
  base: Uint8ClampedArray,
  heat: number[][],
  width: number,
  height: number,
  opacity: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (heat.length !== height || heat[0].length !== width) {
    throw new Error(
      `heat field ${heat[0]?.length ?? 0}x${heat.length} does not match ${width}x${height}`,
    );
  }
  if (base.length !== width * height * 4) {
    throw new Error(`pixel buffer has ${base.length} bytes, expected ${width * height * 4}`);
  }
  const out = new Uint8ClampedArray(base);
  if (opacity === 0) return out;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const h = heat[y][x];
      const i = (y * width + x) * 4;
      for (let c = 0; c < 3; c++) {
        out[i + c] = Math.round(
          base[i + c] * (1 - opacity) + HEAT_RGB[c] * h * opacity,
        );
      }
    }
  }
  return out;
}

/** Full pipeline for one head's patch grid. */
export function overlayHeatmap(
  base: Uint8ClampedArray,
  grid: number[][],
  patchSize: number,
  width: number,
  height: number,
  opacity: number,
): Uint8ClampedArray<ArrayBuffer> {
  const heat = upscaleNearest(normalizeGrid(grid), patchSize);
  return blendHeatmap(base, heat, width, height, opacity);
}
