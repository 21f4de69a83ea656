/** Service client: typed endpoints, request-keyed render cache, stale-drop.
 *
 * The fetch implementation is injectable so tests drive the client against
 * an in-process fake service. */

import { requestKey } from "./requests";
import type { AnchorPoint, AnchorValidationError, ModelInfo, RenderBody } from "./types";

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{
  ok: boolean;
  status: number;
  arrayBuffer(): Promise<ArrayBuffer>;
  json(): Promise<unknown>;
}>;

export class ServiceError extends Error {
  status: number;
  detail: unknown;
  constructor(status: number, detail: unknown) {
    super(`service error ${status}: ${JSON.stringify(detail)}`);
    this.status = status;
    this.detail = detail;
  }
}

export interface RenderResult {
  key: string;
  bytes: Uint8Array;
  fromCache: boolean;
}

export class StudioClient {
  readonly baseUrl: string;
  private fetchImpl: FetchLike;
  private cache = new Map<string, Uint8Array>();
  private cacheLimit: number;

  constructor(baseUrl: string, fetchImpl?: FetchLike, cacheLimit = 256) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl ?? ((globalThis as { fetch: FetchLike }).fetch);
    this.cacheLimit = cacheLimit;
  }

  async health(): Promise<boolean> {
    try {
      const res = await this.fetchImpl(`${this.baseUrl}/health`);
      return res.ok;
    } catch {
      return false;
    }
  }

  async modelInfo(): Promise<ModelInfo> {
    const res = await this.fetchImpl(`${this.baseUrl}/model/info`);
    if (!res.ok) throw new ServiceError(res.status, await res.json().catch(() => null));
    return (await res.json()) as ModelInfo;
  }

  cachedRender(body: RenderBody): RenderResult | null {
    const key = requestKey(body);
    const hit = this.cache.get(key);
    return hit ? { key, bytes: hit, fromCache: true } : null;
  }

  async render(body: RenderBody): Promise<RenderResult> {
    const key = requestKey(body);
    const hit = this.cache.get(key);
    if (hit) return { key, bytes: hit, fromCache: true };
    const res = await this.fetchImpl(`${this.baseUrl}/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: key, // the canonical JSON is the request body
    });
    if (!res.ok) throw new ServiceError(res.status, await res.json().catch(() => null));
    const bytes = new Uint8Array(await res.arrayBuffer());
    this.cache.set(key, bytes);
    if (this.cache.size > this.cacheLimit) {
      const oldest = this.cache.keys().next().value;
      if (oldest !== undefined) this.cache.delete(oldest);
    }
    return { key, bytes, fromCache: false };
  }

  async validateAnchors(text: string, smoothing = 0): Promise<AnchorPoint[]> {
    const res = await this.fetchImpl(`${this.baseUrl}/anchors/validate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text, smoothing }),
    });
    if (!res.ok) {
      const doc = (await res.json().catch(() => ({}))) as { errors?: AnchorValidationError[] };
      throw new ServiceError(res.status, doc.errors ?? []);
    }
    const doc = (await res.json()) as { anchors: { position: number[]; code: number[] }[] };
    return doc.anchors.map((a) => ({
      pos: [a.position[0]!, a.position[1]!, a.position[2]!],
      code: a.code,
    }));
  }
}
