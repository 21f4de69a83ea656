/** Studio state: connected model info, the anchor list, the selected pair
 * and transition slider, and the orbit camera.  All mutations keep the
 * advertised invariants (anchors inside bounds, t in [0,1], codes on the
 * simplex) and every render request is a pure function of this state. */

import { clampToBounds, formatAnchorText, isSimplexCode, parseAnchorText } from "./anchors";
import { cameraBody, defaultOrbit, OrbitState, rotateOrbit, zoomOrbit } from "./orbit";
import { canonicalRenderBody } from "./requests";
import type { AnchorPoint, ModelInfo, RenderBody, RenderMap } from "./types";
import type { StudioClient } from "./client";

export interface ConnectionStatus {
  connected: boolean;
  message: string;
}

export class StudioState {
  info: ModelInfo | null = null;
  status: ConnectionStatus = { connected: false, message: "not connected" };
  anchors: AnchorPoint[] = [];
  pair: [number, number] = [0, 1];
  t = 0;
  orbit: OrbitState = defaultOrbit([[-1, -1, -1], [1, 1, 1]]);
  maps: RenderMap[] = ["rgb"];
  nSamples = 64;

  /** Populate from /model/info; anchors survive reconnects. */
  async connect(client: StudioClient): Promise<void> {
    try {
      const info = await client.modelInfo();
      this.info = info;
      this.status = { connected: true, message: `connected: ${info.prompts.length} prompts` };
      if (info.n === 2) this.pair = [0, 1];
      else this.pair = [Math.min(this.pair[0], info.n - 1), Math.min(this.pair[1], info.n - 1)];
      if (this.pair[0] === this.pair[1]) this.pair = [0, Math.min(1, info.n - 1)];
      this.orbit = { ...this.orbit, ...defaultOrbit(info.bounds), azimuth: this.orbit.azimuth };
    } catch (err) {
      this.status = { connected: false, message: `service unreachable: ${String(err)}` };
      throw err;
    }
  }

  private requireInfo(): ModelInfo {
    if (!this.info) throw new Error("not connected");
    return this.info;
  }

  // ----- anchors ----------------------------------------------------------

  vertexCode(index: number): number[] {
    const n = this.requireInfo().n;
    const code = new Array<number>(n).fill(0);
    code[index] = 1;
    return code;
  }

  addAnchor(pos: [number, number, number], vertex: number): { clamped: boolean } {
    const info = this.requireInfo();
    const { pos: inside, clamped } = clampToBounds(pos, info.bounds);
    this.anchors.push({ pos: inside, code: this.vertexCode(vertex) });
    return { clamped };
  }

  dragAnchor(index: number, pos: [number, number, number]): { clamped: boolean } {
    const info = this.requireInfo();
    const anchor = this.anchors[index];
    if (!anchor) throw new Error(`no anchor ${index}`);
    const { pos: inside, clamped } = clampToBounds(pos, info.bounds);
    anchor.pos = inside;
    return { clamped };
  }

  retagAnchor(index: number, code: number[]): void {
    const info = this.requireInfo();
    if (code.length !== info.n || !isSimplexCode(code)) {
      throw new Error("anchor code must be a simplex point of the model's dimension");
    }
    const anchor = this.anchors[index];
    if (!anchor) throw new Error(`no anchor ${index}`);
    anchor.code = [...code];
  }

  deleteAnchor(index: number): void {
    this.anchors.splice(index, 1);
  }

  /** Hybrid preview needs at least one anchor (the service rejects none). */
  canPreviewAnchors(): boolean {
    return this.anchors.length >= 1;
  }

  exportAnchors(): string {
    return formatAnchorText(this.anchors);
  }

  importAnchors(text: string): void {
    const info = this.requireInfo();
    const parsed = parseAnchorText(text);
    for (const a of parsed) {
      if (a.code.length !== info.n) {
        throw new Error(`anchor codes have ${a.code.length} components, model has ${info.n}`);
      }
    }
    this.anchors = parsed;
  }

  // ----- transition sweep --------------------------------------------------

  setPair(i: number, j: number): void {
    const n = this.requireInfo().n;
    if (i === j || i < 0 || j < 0 || i >= n || j >= n) throw new Error("invalid vertex pair");
    this.pair = [i, j];
  }

  setT(value: number): void {
    this.t = Math.min(Math.max(value, 0), 1);
  }

  // ----- camera -------------------------------------------------------------

  rotateCamera(dAzimuth: number, dElevation: number): void {
    this.orbit = rotateOrbit(this.orbit, dAzimuth, dElevation);
  }

  zoomCamera(factor: number): void {
    this.orbit = zoomOrbit(this.orbit, factor);
  }

  // ----- render request builders (pure functions of state) ------------------

  sweepBody(size: number): RenderBody {
    this.requireInfo();
    return canonicalRenderBody(
      cameraBody(this.orbit, size, size),
      { sweep_t: this.t, pair: [this.pair[0], this.pair[1]] },
      this.maps,
      this.nSamples,
    );
  }

  vertexBody(index: number, size: number): RenderBody {
    this.requireInfo();
    return canonicalRenderBody(
      cameraBody(this.orbit, size, size),
      { fixed: this.vertexCode(index) },
      this.maps,
      this.nSamples,
    );
  }

  anchorsBody(size: number, smoothing = 0): RenderBody {
    this.requireInfo();
    if (!this.canPreviewAnchors()) throw new Error("place at least one anchor first");
    return canonicalRenderBody(
      cameraBody(this.orbit, size, size),
      {
        anchors: this.anchors.map((a) => ({ pos: [...a.pos] as [number, number, number], code: [...a.code] })),
        smoothing,
      },
      this.maps,
      this.nSamples,
    );
  }
}
