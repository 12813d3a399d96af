// App wiring: draw a prompt on the query image, tune the controls, submit,
// inspect ranked results and per-head attention overlays.

import { ApiError, Client } from "./api.js";
import { overlayHeatmap } from "./heatmap.js";
import {
  PromptDraft,
  Tool,
  clearDraft,
  createDraft,
  pointerDown,
  pointerMove,
  pointerUp,
  serializePrompt,
} from "./prompt.js";
import { buildQueryRequest, clampHOn, defaultControls } from "./request.js";
import { extractGridOrder, renderError, renderResultsGrid } from "./results.js";
import type { HeatmapGrids, ImageInfo, ModelInfo, QueryResponse } from "./types.js";

const client = new Client("");
const controls = defaultControls();

let model: ModelInfo;
let images: ImageInfo[] = [];
let draft: PromptDraft | null = null;
let baseImage: HTMLImageElement | null = null;
let grids: HeatmapGrids | null = null;
let activeHead = 0;
let overlayOpacity = 0.5;
let inflight: AbortController | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function canvas(): HTMLCanvasElement {
  return el<HTMLCanvasElement>("prompt-canvas");
}

function canvasPos(event: MouseEvent): { x: number; y: number } {
  const rect = canvas().getBoundingClientRect();
  const scaleX = canvas().width / rect.width;
  const scaleY = canvas().height / rect.height;
  return {
    x: (event.clientX - rect.left) * scaleX,
    y: (event.clientY - rect.top) * scaleY,
  };
}

function drawScene(): void {
  if (!draft || !baseImage) return;
  const ctx = canvas().getContext("2d");
  if (!ctx) return;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(baseImage, 0, 0, draft.imageW, draft.imageH);

  if (grids && overlayOpacity > 0) {
    try {
      const pixels = ctx.getImageData(0, 0, draft.imageW, draft.imageH);
      const blended = overlayHeatmap(
        pixels.data,
        grids.heads[activeHead],
        model.patch_size,
        draft.imageW,
        draft.imageH,
        overlayOpacity,
      );
      ctx.putImageData(new ImageData(blended, draft.imageW, draft.imageH), 0, 0);
    } catch (err) {
      el<HTMLElement>("results").innerHTML = renderError("overlay_mismatch", String(err));
      grids = null;
    }
  }

  ctx.strokeStyle = "#16a34a";
  ctx.fillStyle = "rgba(22, 163, 74, 0.25)";
  ctx.lineWidth = 1;
  const prompt = draft.prompt;
  if (draft.drag && draft.tool === "box") {
    const d = draft.drag;
    ctx.strokeRect(
      Math.min(d.x0, d.x1), Math.min(d.y0, d.y1),
      Math.abs(d.x1 - d.x0) + 1, Math.abs(d.y1 - d.y0) + 1,
    );
  } else if (prompt?.type === "box") {
    ctx.strokeRect(prompt.x0, prompt.y0, prompt.x1 - prompt.x0 + 1, prompt.y1 - prompt.y0 + 1);
  } else if (prompt?.type === "point") {
    const p = model.patch_size;
    const half = Math.floor(prompt.window / 2);
    const c = Math.floor(prompt.x / p) - half;
    const r = Math.floor(prompt.y / p) - half;
    ctx.strokeRect(c * p, r * p, prompt.window * p, prompt.window * p);
    ctx.fillRect(prompt.x - 1, prompt.y - 1, 3, 3);
  } else if (prompt?.type === "segment" && draft.painted.some((v) => v === 1)) {
    for (let y = 0; y < draft.imageH; y++) {
      for (let x = 0; x < draft.imageW; x++) {
        if (draft.painted[y * draft.imageW + x]) ctx.fillRect(x, y, 1, 1);
      }
    }
  }
  el<HTMLElement>("prompt-json").textContent = prompt ? serializePrompt(prompt) : "(none)";
}

async function selectImage(id: string): Promise<void> {
  const info = images.find((i) => i.id === id);
  if (!info) return;
  draft = createDraft(id, info.w, info.h, model.patch_size, currentTool());
  grids = null;
  const img = new Image();
  img.src = client.imageUrl(id);
  await img.decode();
  baseImage = img;
  canvas().width = info.w;
  canvas().height = info.h;
  try {
    grids = await client.attention(id);
    renderHeadTabs();
  } catch {
    grids = null; // store built without caches: overlay unavailable
  }
  drawScene();
}

function currentTool(): Tool {
  return (el<HTMLSelectElement>("tool").value as Tool) ?? "box";
}

function renderHeadTabs(): void {
  const tabs = el<HTMLElement>("head-tabs");
  if (!grids) {
    tabs.innerHTML = "";
    return;
  }
  tabs.innerHTML = grids.heads
    .map(
      (_, i) =>
        `<button class="head-tab${i === activeHead ? " active" : ""}" data-head="${i}">h${i}</button>`,
    )
    .join("");
  tabs.querySelectorAll("button").forEach((btn) =>
    btn.addEventListener("click", () => {
      activeHead = Number(btn.dataset.head);
      renderHeadTabs();
      drawScene();
    }),
  );
}

async function submit(): Promise<void> {
  if (!draft) return;
  const resultsEl = el<HTMLElement>("results");
  let response: QueryResponse;
  inflight?.abort(); // at most one in-flight query
  inflight = new AbortController();
  try {
    const request = buildQueryRequest(draft, controls);
    response = await client.query(request, inflight.signal);
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") return;
    if (err instanceof ApiError) {
      resultsEl.innerHTML = renderError(err.code, err.message);
    } else {
      resultsEl.innerHTML = renderError("client_error", String(err));
    }
    return;
  }
  resultsEl.innerHTML = renderResultsGrid(response, (id) => client.imageUrl(id));
  console.assert(
    extractGridOrder(resultsEl.innerHTML).join(",") ===
      response.ranked.map((r) => r.image_id).join(","),
    "grid order must follow the service ranking",
  );
}

function bindControls(): void {
  const hOn = el<HTMLInputElement>("h-on");
  hOn.max = String(model.num_heads);
  hOn.value = String(clampHOn(controls.hOn, model));
  hOn.addEventListener("input", () => {
    controls.hOn = clampHOn(Number(hOn.value), model);
    el<HTMLElement>("h-on-value").textContent = String(controls.hOn);
  });

  el<HTMLSelectElement>("mode").addEventListener("change", (e) => {
    controls.mode = (e.target as HTMLSelectElement).value as typeof controls.mode;
  });
  el<HTMLSelectElement>("roi").addEventListener("change", (e) => {
    controls.roi = (e.target as HTMLSelectElement).value as typeof controls.roi;
  });
  el<HTMLSelectElement>("strategy").addEventListener("change", (e) => {
    controls.strategy = (e.target as HTMLSelectElement).value as typeof controls.strategy;
  });
  el<HTMLInputElement>("top-k").addEventListener("input", (e) => {
    controls.k = Math.max(1, Number((e.target as HTMLInputElement).value));
  });
  el<HTMLInputElement>("opacity").addEventListener("input", (e) => {
    overlayOpacity = Number((e.target as HTMLInputElement).value) / 100;
    drawScene();
  });
  el<HTMLSelectElement>("tool").addEventListener("change", () => {
    if (draft) {
      draft = clearDraft({ ...draft, tool: currentTool() });
      drawScene();
    }
  });
  el<HTMLInputElement>("snap").addEventListener("change", (e) => {
    if (draft) draft = { ...draft, snapToGrid: (e.target as HTMLInputElement).checked };
  });
  el<HTMLButtonElement>("clear").addEventListener("click", () => {
    if (draft) {
      draft = clearDraft(draft);
      drawScene();
    }
  });
  el<HTMLButtonElement>("submit").addEventListener("click", () => void submit());

  const cv = canvas();
  cv.addEventListener("mousedown", (e) => {
    if (!draft) return;
    const { x, y } = canvasPos(e);
    draft = pointerDown(draft, x, y);
    drawScene();
  });
  cv.addEventListener("mousemove", (e) => {
    if (!draft || !draft.drag) return;
    const { x, y } = canvasPos(e);
    draft = pointerMove(draft, x, y);
    drawScene();
  });
  window.addEventListener("mouseup", () => {
    if (!draft) return;
    draft = pointerUp(draft);
    drawScene();
  });
}

async function start(): Promise<void> {
  model = await client.modelInfo();
  images = await client.listImages();
  const list = el<HTMLElement>("image-list");
  list.innerHTML = images
    .map(
      (info) => `
      <button class="thumb" data-id="${info.id}">
        <img src="${client.imageUrl(info.id)}" alt="${info.id}" />
        <span>${info.id}</span>
      </button>`,
    )
    .join("");
  list.querySelectorAll("button").forEach((btn) =>
    btn.addEventListener("click", () => void selectImage(btn.dataset.id as string)),
  );
  bindControls();
  if (images.length > 0) await selectImage(images[0].id);
}

void start().catch((err) => {
  document.body.insertAdjacentHTML("beforeend", renderError("startup", String(err)));
});
