// Query-request construction.  All retrieval math happens server-side; the
// client only assembles the canonical request body.

import type { PromptDraft } from "./prompt.js";
import type {
  Mode,
  ModelInfo,
  PromptJson,
  QueryRequest,
  RoiStrategy,
  SelectionStrategy,
} from "./types.js";

export interface QueryControls {
  mode: Mode;
  hOn: number;
  k: number;
  roi: RoiStrategy;
  strategy: SelectionStrategy;
  includeHeatmaps: boolean;
}

export function defaultControls(): QueryControls {
  return {
    mode: "phs-qo",
    hOn: 1,
    k: 10,
    roi: "sum",
    strategy: "before_scale",
    includeHeatmaps: false,
  };
}

/** The retained-head slider is bounded by the model's head count. */
export function clampHOn(value: number, model: ModelInfo): number {
  return Math.min(Math.max(Math.round(value), 1), model.num_heads);
}

export function buildQueryRequest(
  draft: PromptDraft,
  controls: QueryControls,
): QueryRequest {
  if (controls.mode !== "cbir" && draft.prompt === null) {
    throw new Error(`mode ${controls.mode} needs a drawn prompt`);
  }
  const request: QueryRequest = {
    image_id: draft.imageId,
    mode: controls.mode,
    k: controls.k,
    roi: controls.roi,
    strategy: controls.strategy,
  };
  if (controls.mode !== "cbir") {
    request.prompt = draft.prompt as PromptJson;
  }
  if (controls.mode === "phs-qo" || controls.mode === "phs-qd") {
    request.h_on = controls.hOn;
  }
  if (controls.includeHeatmaps) {
    request.include_heatmaps = true;
  }
  return request;
}

/** Canonical body bytes: fixed key order, no whitespace. */
export function serializeRequest(request: QueryRequest): string {
  const ordered: Record<string, unknown> = { image_id: request.image_id, mode: request.mode };
  if (request.prompt !== undefined) ordered.prompt = request.prompt;
  if (request.h_on !== undefined) ordered.h_on = request.h_on;
  ordered.k = request.k;
  ordered.roi = request.roi;
  ordered.strategy = request.strategy;
  if (request.include_heatmaps !== undefined) {
    ordered.include_heatmaps = request.include_heatmaps;
  }
  return JSON.stringify(ordered);
}
