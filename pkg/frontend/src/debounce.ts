/** Preview scheduling discipline.
 *
 * Invariants enforced here:
 *   - at most ONE full-resolution render request in flight, ever;
 *   - edits debounce (trailing, 150 ms) before the full-res request fires;
 *   - while scrubbing, low-res previews chase the latest state, one at a
 *     time, and the full-res refine lands after the scrub settles;
 *   - responses that no longer match the wanted request key are discarded.
 */

import type { StudioClient } from "./client";
import { requestKey } from "./requests";
import type { RenderBody } from "./types";

export type BodyBuilder = (size: number) => RenderBody;

export interface PreviewUpdate {
  key: string;
  bytes: Uint8Array;
  resolution: "low" | "full";
}

export interface SchedulerOptions {
  debounceMs?: number;
  lowRes?: number;
  fullRes?: number;
  onUpdate: (update: PreviewUpdate) => void;
  onError?: (err: unknown) => void;
}

export class PreviewScheduler {
  private client: StudioClient;
  private debounceMs: number;
  private lowRes: number;
  private fullRes: number;
  private onUpdate: (update: PreviewUpdate) => void;
  private onError: (err: unknown) => void;

  private build: BodyBuilder | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private lowInFlight = false;
  private lowDirty = false;
  private fullInFlight = false;
  private fullDirty = false;

  fullRequestsStarted = 0; // instrumentation for tests

  constructor(client: StudioClient, options: SchedulerOptions) {
    this.client = client;
    this.debounceMs = options.debounceMs ?? 150;
    this.lowRes = options.lowRes ?? 64;
    this.fullRes = options.fullRes ?? 256;
    this.onUpdate = options.onUpdate;
    this.onError = options.onError ?? (() => undefined);
  }

  get fullInFlightCount(): number {
    return this.fullInFlight ? 1 : 0;
  }

  /** Register the latest wanted preview; scrubbing requests a low-res chase. */
  schedule(build: BodyBuilder, scrubbing = false): void {
    this.build = build;
    if (scrubbing) this.kickLow();
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.kickFull();
    }, this.debounceMs);
  }

  /** Cancel anything pending (e.g. preview disabled). */
  cancel(): void {
    this.build = null;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private kickLow(): void {
    if (this.build === null) return;
    if (this.lowInFlight) {
      this.lowDirty = true;
      return;
    }
    const body = this.build(this.lowRes);
    const want = requestKey(body);
    this.lowInFlight = true;
    this.client
      .render(body)
      .then((res) => {
        this.lowInFlight = false;
        const current = this.build ? requestKey(this.build(this.lowRes)) : null;
        if (res.key === current) {
          this.onUpdate({ key: res.key, bytes: res.bytes, resolution: "low" });
        }
        if (this.lowDirty) {
          this.lowDirty = false;
          if (current !== want) this.kickLow();
        }
      })
      .catch((err) => {
        this.lowInFlight = false;
        this.lowDirty = false;
        this.onError(err);
      });
  }

  private kickFull(): void {
    if (this.build === null) return;
    if (this.fullInFlight) {
      this.fullDirty = true;
      return;
    }
    const body = this.build(this.fullRes);
    this.fullInFlight = true;
    this.fullRequestsStarted += 1;
    this.client
      .render(body)
      .then((res) => {
        this.fullInFlight = false;
        const current = this.build ? requestKey(this.build(this.fullRes)) : null;
        if (res.key === current) {
          this.onUpdate({ key: res.key, bytes: res.bytes, resolution: "full" });
        } else if (current !== null) {
          this.fullDirty = true; // the state moved on; refine again
        }
        if (this.fullDirty) {
          this.fullDirty = false;
          this.kickFull();
        }
      })
      .catch((err) => {
        this.fullInFlight = false;
        this.fullDirty = false;
        this.onError(err);
      });
  }
}
