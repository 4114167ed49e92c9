// Single source of truth for the explorer: uploaded images, knob/blend values,
// the response cache, and pinned snapshots. Rendering reads exclusively from
// here, so slider state, cache, and the visible image cannot disagree.

import { pngDimensions, isPng } from "./png.js";
import type { CachedResult, Mode, SrResponse } from "./types.js";

export const MAX_SIDE = 512;
export const DETENTS = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

export interface UploadedImage {
  id: string;
  base64: string;
  width: number;
  height: number;
}

export interface PinnedSnapshot {
  value: number;
  response: SrResponse;
}

export type Hasher = (bytes: Uint8Array) => Promise<string>;

export async function subtleSha256(bytes: Uint8Array): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", bytes.slice().buffer);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

export function cacheKey(imageId: string, mode: Mode, value: number, model: string): string {
  return `${imageId}|${mode}|${value.toFixed(4)}|${model}`;
}

export class SessionState {
  images = new Map<string, UploadedImage>();
  currentImageId: string | null = null;
  mode: Mode = "knob";
  t = 0.0;
  alpha = 0.5;
  model = "";
  cache = new Map<string, CachedResult>();
  pinned: PinnedSnapshot[] = [];

  constructor(private hasher: Hasher = subtleSha256) {}

  async uploadImage(bytes: Uint8Array, base64: string): Promise<UploadedImage> {
    if (!isPng(bytes)) {
      throw new Error("only PNG uploads are supported");
    }
    const { width, height } = pngDimensions(bytes);
    if (Math.max(width, height) > MAX_SIDE) {
      throw new Error(`image is ${width}x${height}; the service cap is ${MAX_SIDE}px per side`);
    }
    const id = await this.hasher(bytes);
    const existing = this.images.get(id);
    if (existing) {
      this.currentImageId = id;
      return existing;
    }
    const img: UploadedImage = { id, base64, width, height };
    this.images.set(id, img);
    this.currentImageId = id;
    return img;
  }

  setT(value: number): void {
    if (!(value >= 0 && value <= 1)) {
      throw new Error(`t must lie in [0,1], got ${value}`);
    }
    this.t = value;
  }

  setAlpha(value: number): void {
    if (!(value >= 0 && value <= 1)) {
      throw new Error(`alpha must lie in [0,1], got ${value}`);
    }
    this.alpha = value;
  }

  currentKey(): string | null {
    if (this.currentImageId === null) return null;
    const value = this.mode === "blend" ? this.alpha : this.t;
    return cacheKey(this.currentImageId, this.mode, value, this.model);
  }

  lookup(): CachedResult | null {
    const key = this.currentKey();
    return key === null ? null : (this.cache.get(key) ?? null);
  }

  store(response: SrResponse): void {
    const key = this.currentKey();
    if (key === null) {
      throw new Error("no image selected");
    }
    const value = this.mode === "blend" ? this.alpha : this.t;
    this.cache.set(key, { response, mode: this.mode, value });
  }

  pin(): PinnedSnapshot | null {
    const hit = this.lookup();
    if (!hit) return null;
    const snap = { value: hit.value, response: hit.response };
    this.pinned.push(snap);
    if (this.pinned.length > 2) {
      this.pinned.shift();
    }
    return snap;
  }

  exportSession(): string {
    return JSON.stringify(
      {
        image: this.currentImageId,
        mode: this.mode,
        t: this.t,
        alpha: this.alpha,
        model: this.model,
        pinned: this.pinned.map((p) => ({ value: p.value, metrics: p.response.metrics })),
      },
      null,
      2,
    );
  }
}
