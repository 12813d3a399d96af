// Wire types shared with the retrieval service.

export type Mode = "cbir" | "mask" | "crop" | "attn-mask" | "phs-qo" | "phs-qd";
export type RoiStrategy = "sum" | "max";
export type SelectionStrategy =
  | "before_scale"
  | "before"
  | "after"
  | "after_scale"
  | "identity";

export type PromptJson =
  | { type: "box"; x0: number; y0: number; x1: number; y1: number }
  | { type: "point"; x: number; y: number; window: number }
  | { type: "segment"; rle: number[]; h: number; w: number };

export interface QueryRequest {
  image_id: string;
  mode: Mode;
  prompt?: PromptJson;
  h_on?: number;
  k: number;
  roi: RoiStrategy;
  strategy: SelectionStrategy;
  include_heatmaps?: boolean;
}

export interface RankedItem {
  image_id: string;
  score: number;
  rank: number;
}

export interface HeatmapGrids {
  heads: number[][][];
  cls_mass: number[];
  register_mass: number[];
  grid_h: number;
  grid_w: number;
}

export interface QueryResponse {
  mode: Mode;
  fallback: boolean;
  ranked: RankedItem[];
  selected_heads: number[] | null;
  roi_scores: number[] | null;
  image_id: string;
  k: number;
  heatmaps?: HeatmapGrids;
  timing_ms: { total: number };
}

export interface ObjectInfo {
  category: string;
  box: { x0: number; y0: number; x1: number; y1: number };
}

export interface ImageInfo {
  id: string;
  h: number;
  w: number;
  objects: ObjectInfo[];
}

export interface ModelInfo {
  num_heads: number;
  num_layers: number;
  num_registers: number;
  patch_size: number;
  embed_dim: number;
  image_h: number;
  image_w: number;
  store_size: number;
}

export interface ServiceError {
  error: string;
  message: string;
}
