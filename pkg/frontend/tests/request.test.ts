import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { createDraft, pointerDown, pointerMove, pointerUp } from "../src/prompt.js";
import {
  buildQueryRequest,
  clampHOn,
  defaultControls,
  serializeRequest,
} from "../src/request.js";
import type { ModelInfo } from "../src/types.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

const MODEL: ModelInfo = {
  num_heads: 4,
  num_layers: 1,
  num_registers: 0,
  patch_size: 8,
  embed_dim: 16,
  image_h: 32,
  image_w: 32,
  store_size: 30,
};

function fixedDraft() {
  // the draft behind the recorded fixture: box (2,3)-(14,12) on db-000
  let d = createDraft("db-000", 32, 32, 8, "box");
  d = pointerDown(d, 2, 3);
  d = pointerMove(d, 14, 12);
  return pointerUp(d);
}

describe("request serialization", () => {
  it("a fixed draft serializes to the golden request bytes", () => {
    const golden = readFileSync(join(FIXTURES, "golden_request.json"), "utf-8");
    const request = buildQueryRequest(fixedDraft(), {
      ...defaultControls(),
      mode: "phs-qo",
      hOn: 1,
      k: 6,
    });
    expect(serializeRequest(request)).toBe(golden);
  });

  it("cbir requests carry no prompt", () => {
    const request = buildQueryRequest(fixedDraft(), {
      ...defaultControls(),
      mode: "cbir",
      k: 3,
    });
    expect(request.prompt).toBeUndefined();
    expect(request.h_on).toBeUndefined();
    expect(serializeRequest(request)).toBe(
      '{"image_id":"db-000","mode":"cbir","k":3,"roi":"sum","strategy":"before_scale"}',
    );
  });

  it("baseline modes keep the prompt but not h_on", () => {
    const request = buildQueryRequest(fixedDraft(), {
      ...defaultControls(),
      mode: "mask",
    });
    expect(request.prompt).toBeDefined();
    expect(request.h_on).toBeUndefined();
  });

  it("prompted modes without a drawn prompt are rejected", () => {
    const empty = createDraft("db-000", 32, 32, 8, "box");
    expect(() => buildQueryRequest(empty, defaultControls())).toThrow(/prompt/);
  });

  it("include_heatmaps appears only when requested", () => {
    const on = buildQueryRequest(fixedDraft(), {
      ...defaultControls(),
      includeHeatmaps: true,
    });
    expect(serializeRequest(on)).toContain('"include_heatmaps":true');
    const off = buildQueryRequest(fixedDraft(), defaultControls());
    expect(serializeRequest(off)).not.toContain("include_heatmaps");
  });
});

describe("head-count slider", () => {
  it("clamps into [1, num_heads]", () => {
    expect(clampHOn(0, MODEL)).toBe(1);
    expect(clampHOn(1, MODEL)).toBe(1);
    expect(clampHOn(4, MODEL)).toBe(4);
    expect(clampHOn(99, MODEL)).toBe(4);
  });
});
