// Prompt drafting: canvas interactions accumulate into a PromptDraft whose
// serialization is exactly the service's prompt JSON schema.

import { rleEncode } from "./rle.js";
import type { PromptJson } from "./types.js";

export type Tool = "point" | "box" | "paint";

export interface PromptDraft {
  imageId: string;
  imageW: number;
  imageH: number;
  patchSize: number;
  tool: Tool;
  pointWindow: number;
  snapToGrid: boolean;
  drag: { x0: number; y0: number; x1: number; y1: number } | null;
  painted: Uint8Array; // H*W pixel mask for the paint tool
  prompt: PromptJson | null;
}

export function createDraft(
  imageId: string,
  imageW: number,
  imageH: number,
  patchSize: number,
  tool: Tool = "box",
): PromptDraft {
  return {
    imageId,
    imageW,
    imageH,
    patchSize,
    tool,
    pointWindow: 3,
    snapToGrid: true,
    drag: null,
    painted: new Uint8Array(imageW * imageH),
    prompt: null,
  };
}

function clampX(draft: PromptDraft, x: number): number {
  return Math.min(Math.max(Math.round(x), 0), draft.imageW - 1);
}

function clampY(draft: PromptDraft, y: number): number {
  return Math.min(Math.max(Math.round(y), 0), draft.imageH - 1);
}

/** Pointer down: boxes start a drag, points commit, paint adds its first daub. */
export function pointerDown(draft: PromptDraft, x: number, y: number): PromptDraft {
  const px = clampX(draft, x);
  const py = clampY(draft, y);
  if (draft.tool === "point") {
    return {
      ...draft,
      prompt: { type: "point", x: px, y: py, window: draft.pointWindow },
    };
  }
  if (draft.tool === "box") {
    return { ...draft, drag: { x0: px, y0: py, x1: px, y1: py } };
  }
  return paintAt(draft, x, y);
}

export function pointerMove(draft: PromptDraft, x: number, y: number): PromptDraft {
  if (draft.tool === "box" && draft.drag) {
    return {
      ...draft,
      drag: { ...draft.drag, x1: clampX(draft, x), y1: clampY(draft, y) },
    };
  }
  if (draft.tool === "paint" && draft.drag) {
    return paintAt(draft, x, y);
  }
  return draft;
}

/** Pointer up: a finished box drag normalizes its corners and commits. */
export function pointerUp(draft: PromptDraft): PromptDraft {
  if (draft.tool === "box" && draft.drag) {
    const { x0, y0, x1, y1 } = draft.drag;
    const prompt: PromptJson = {
      type: "box",
      x0: Math.min(x0, x1),
      y0: Math.min(y0, y1),
      x1: Math.max(x0, x1),
      y1: Math.max(y0, y1),
    };
    return { ...draft, drag: null, prompt };
  }
  if (draft.tool === "paint") {
    return commitPaint({ ...draft, drag: null });
  }
  return draft;
}

/** Paint one daub: a full patch cell when snapping, a single pixel otherwise. */
export function paintAt(draft: PromptDraft, x: number, y: number): PromptDraft {
  const px = clampX(draft, x);
  const py = clampY(draft, y);
  const painted = new Uint8Array(draft.painted);
  if (draft.snapToGrid) {
    const p = draft.patchSize;
    const r0 = Math.floor(py / p) * p;
    const c0 = Math.floor(px / p) * p;
    for (let r = r0; r < r0 + p; r++) {
      painted.fill(1, r * draft.imageW + c0, r * draft.imageW + c0 + p);
    }
  } else {
    painted[py * draft.imageW + px] = 1;
  }
  // drag doubles as the "brush is down" flag for the paint tool
  const next = { ...draft, painted, drag: { x0: px, y0: py, x1: px, y1: py } };
  return commitPaint(next);
}

function commitPaint(draft: PromptDraft): PromptDraft {
  if (!draft.painted.some((v) => v === 1)) {
    return { ...draft, prompt: null };
  }
  const prompt: PromptJson = {
    type: "segment",
    rle: rleEncode(draft.painted),
    h: draft.imageH,
    w: draft.imageW,
  };
  return { ...draft, prompt };
}

export function clearDraft(draft: PromptDraft): PromptDraft {
  return {
    ...draft,
    drag: null,
    painted: new Uint8Array(draft.imageW * draft.imageH),
    prompt: null,
  };
}

/** Canonical serialization: fixed key order, no whitespace. */
export function serializePrompt(prompt: PromptJson): string {
  switch (prompt.type) {
    case "box":
      return JSON.stringify({
        type: "box",
        x0: prompt.x0,
        y0: prompt.y0,
        x1: prompt.x1,
        y1: prompt.y1,
      });
    case "point":
      return JSON.stringify({
        type: "point",
        x: prompt.x,
        y: prompt.y,
        window: prompt.window,
      });
    case "segment":
      return JSON.stringify({
        type: "segment",
        rle: prompt.rle,
        h: prompt.h,
        w: prompt.w,
      });
  }
}

export function parsePrompt(text: string): PromptJson {
  const obj = JSON.parse(text) as PromptJson;
  if (obj.type !== "box" && obj.type !== "point" && obj.type !== "segment") {
    throw new Error(`unknown prompt type ${(obj as { type: string }).type}`);
  }
  return obj;
}
