// Debounced knob controller: at most one in-flight /sr request per pane,
// superseded requests cancelled, cache hits render without any network call.

import { ApiClient } from "./api.js";
import { SessionState } from "./state.js";
import type { SrResponse } from "./types.js";

export const DEBOUNCE_MS = 150;

export interface KnobEvents {
  onResult: (response: SrResponse, fromCache: boolean) => void;
  onError?: (err: unknown) => void;
}

export class KnobController {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inflight: AbortController | null = null;
  requestCount = 0;

  constructor(
    private state: SessionState,
    private api: ApiClient,
    private events: KnobEvents,
    private debounceMs: number = DEBOUNCE_MS,
  ) {}

  /** Slider movement: cache hits render immediately, misses debounce a fetch. */
  setKnob(t: number): void {
    this.state.setT(t);
    const hit = this.state.lookup();
    if (hit) {
      if (this.timer !== null) {
        clearTimeout(this.timer);
        this.timer = null;
      }
      this.events.onResult(hit.response, true);
      return;
    }
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, this.debounceMs);
  }

  private async fire(): Promise<void> {
    const image = this.state.currentImageId && this.state.images.get(this.state.currentImageId);
    if (!image) return;
    const requestedKey = this.state.currentKey();
    if (this.inflight) {
      this.inflight.abort();
    }
    const controller = new AbortController();
    this.inflight = controller;
    this.requestCount += 1;
    try {
      const response = await this.api.sr(
        {
          image: image.base64,
          t_knob: this.state.t,
          model: this.state.model || undefined,
        },
        controller.signal,
      );
      if (this.state.currentKey() === requestedKey) {
        this.state.store(response);
        this.events.onResult(response, false);
      }
    } catch (err) {
      if ((err as Error)?.name !== "AbortError") {
        this.events.onError?.(err);
      }
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
      }
    }
  }
}
