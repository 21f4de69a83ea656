/** In-process fake of the render service, mirroring the documented
 * endpoint semantics: sweep latents resolve to u = (1-t) e_i + t e_j, and
 * the returned "image" bytes are a deterministic function of the resolved
 * content (u or anchor field), the camera, the maps, and the sample count
 * -- so byte equality means semantic equality, like the real renderer. */

import type { FetchLike } from "../src/client";
import type { ModelInfo } from "../src/types";

interface RenderDoc {
  camera: { position: number[]; width: number; height: number };
  latent: {
    fixed?: number[];
    sweep_t?: number;
    pair?: [number, number];
    anchors?: { pos: number[]; code: number[] }[];
    smoothing?: number;
  };
  maps: string[];
  n_samples: number;
}

export class FakeService {
  info: ModelInfo;
  latencyMs: number;
  requests = 0;
  inFlightBySize = new Map<number, number>();
  maxInFlightBySize = new Map<number, number>();

  constructor(n = 2, latencyMs = 0) {
    this.latencyMs = latencyMs;
    this.info = {
      prompts: Array.from({ length: n }, (_, i) => `prompt ${i}`),
      n,
      bounds: [[-0.8, -0.8, -0.8], [0.8, 0.8, 0.8]],
      iteration: 2000,
      image_limits: { max_width: 512, max_height: 512 },
      maps: ["rgb", "normal", "depth", "opacity"],
    };
  }

  private resolveContent(doc: RenderDoc): unknown {
    const latent = doc.latent;
    if (latent.fixed) return { u: latent.fixed.map((v) => v.toFixed(8)) };
    if (latent.sweep_t !== undefined && latent.pair) {
      const u = new Array<number>(this.info.n).fill(0);
      u[latent.pair[0]] += 1 - latent.sweep_t;
      u[latent.pair[1]] += latent.sweep_t;
      return { u: u.map((v) => v.toFixed(8)) };
    }
    if (latent.anchors) {
      // semantic stand-in: which anchor dominates the scene center
      let best = 0;
      let bestDist = Infinity;
      latent.anchors.forEach((a, i) => {
        const d = Math.hypot(a.pos[0]!, a.pos[1]!, a.pos[2]!);
        if (d < bestDist) {
          bestDist = d;
          best = i;
        }
      });
      return {
        dominant: latent.anchors[best]!.code,
        layout: latent.anchors.map((a) => a.pos.map((v) => v.toFixed(5))),
      };
    }
    throw new Error("invalid latent");
  }

  private async delay(): Promise<void> {
    if (this.latencyMs > 0) {
      await new Promise((resolve) => setTimeout(resolve, this.latencyMs));
    }
  }

  fetch: FetchLike = async (url, init) => {
    this.requests += 1;
    const path = url.replace(/^[a-z]+:\/\/[^/]+/, "");
    const ok = (status: number, payload: unknown, bytes?: Uint8Array) => ({
      ok: status < 400,
      status,
      arrayBuffer: async () => {
        const b = bytes ?? new Uint8Array();
        // return a copy backed by a plain ArrayBuffer
        return b.slice().buffer as ArrayBuffer;
      },
      json: async () => payload,
    });

    if (path === "/health") return ok(200, { status: "ok" });
    if (path === "/model/info") return ok(200, this.info);
    if (path === "/anchors/validate") {
      const doc = JSON.parse(init?.body ?? "{}") as { text: string };
      const lines = doc.text.split(/\r?\n/).filter((l) => l.split("#")[0]!.trim().length > 0);
      const anchors = [];
      const errors = [];
      for (let i = 0; i < lines.length; i++) {
        const fields = lines[i]!.split("#")[0]!.trim().split(/\s+/).map(Number);
        if (fields.some(Number.isNaN) || fields.length < 4) {
          errors.push({ line: i + 1, message: "unparseable line" });
        } else {
          anchors.push({ position: fields.slice(0, 3), code: fields.slice(3) });
        }
      }
      if (errors.length) return ok(400, { errors });
      return ok(200, { anchors, n: anchors[0]?.code.length ?? 0 });
    }
    if (path === "/render") {
      const doc = JSON.parse(init?.body ?? "{}") as RenderDoc;
      const size = doc.camera.width;
      this.inFlightBySize.set(size, (this.inFlightBySize.get(size) ?? 0) + 1);
      this.maxInFlightBySize.set(
        size,
        Math.max(this.maxInFlightBySize.get(size) ?? 0, this.inFlightBySize.get(size)!),
      );
      try {
        await this.delay();
        let content: unknown;
        try {
          content = this.resolveContent(doc);
        } catch (err) {
          return ok(400, { detail: [{ loc: ["latent"], msg: String(err) }] });
        }
        const descriptor = JSON.stringify({
          content,
          camera: doc.camera,
          maps: doc.maps,
          n_samples: doc.n_samples,
        });
        return ok(200, null, new TextEncoder().encode(descriptor));
      } finally {
        this.inFlightBySize.set(size, this.inFlightBySize.get(size)! - 1);
      }
    }
    return ok(404, { detail: "no such endpoint" });
  };
}
