// Thin fetch client for the retrieval service.

import { serializeRequest } from "./request.js";
import type {
  ImageInfo,
  ModelInfo,
  QueryRequest,
  QueryResponse,
  ServiceError,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(res: Response): Promise<never> {
  let code = "error";
  let message = res.statusText;
  try {
    const body = (await res.json()) as ServiceError;
    code = body.error ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, code, message);
}

export class Client {
  constructor(private base: string = "") {}

  imageUrl(id: string): string {
    return `${this.base}/api/image/${encodeURIComponent(id)}`;
  }

  async modelInfo(): Promise<ModelInfo> {
    const res = await fetch(`${this.base}/api/model`);
    if (!res.ok) await parseError(res);
    return res.json();
  }

  async listImages(offset = 0, limit?: number): Promise<ImageInfo[]> {
    const params = new URLSearchParams({ offset: String(offset) });
    if (limit !== undefined) params.set("limit", String(limit));
    const res = await fetch(`${this.base}/api/images?${params}`);
    if (!res.ok) await parseError(res);
    return res.json();
  }

  async attention(id: string): Promise<import("./types.js").HeatmapGrids> {
    const res = await fetch(`${this.base}/api/attention/${encodeURIComponent(id)}`);
    if (!res.ok) await parseError(res);
    return res.json();
  }

  async query(request: QueryRequest, signal?: AbortSignal): Promise<QueryResponse> {
    const res = await fetch(`${this.base}/api/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: serializeRequest(request),
      signal,
    });
    if (!res.ok) await parseError(res);
    return res.json();
  }
}
