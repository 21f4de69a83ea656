/** Canonical request bodies and their cache keys.
 *
 * Key discipline: bodies are built with a fixed key order so identical
 * studio state always produces an identical JSON string, which doubles as
 * the render-cache key (the UI never shows pixels that did not come back
 * from the service for exactly that key). */

import type { CameraBody, LatentBody, RenderBody } from "./types";

export function canonicalRenderBody(
  camera: CameraBody,
  latent: LatentBody,
  maps: string[],
  nSamples: number,
): RenderBody {
  // rebuild objects field by field: insertion order is serialization order
  const cam: CameraBody = {
    position: [...camera.position],
    target: [...camera.target],
    up: [...camera.up],
    fov_deg: camera.fov_deg,
    width: camera.width,
    height: camera.height,
  };
  let lat: LatentBody;
  if ("fixed" in latent) {
    lat = { fixed: [...latent.fixed] };
  } else if ("sweep_t" in latent) {
    lat = { sweep_t: latent.sweep_t, pair: [latent.pair[0], latent.pair[1]] };
  } else {
    lat = {
      anchors: latent.anchors.map((a) => ({ pos: [...a.pos] as [number, number, number], code: [...a.code] })),
      smoothing: latent.smoothing,
    };
  }
  return { camera: cam, latent: lat, maps: [...maps], n_samples: nSamples };
}

export function requestKey(body: RenderBody): string {
  return JSON.stringify(body);
}

/** FNV-1a over a byte array; used to compare returned images cheaply. */
export function bytesHash(bytes: Uint8Array): string {
  let hash = 0x811c9dc5;
  for (let i = 0; i < bytes.length; i++) {
    hash ^= bytes[i]!;
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash.toString(16).padStart(8, "0");
}
