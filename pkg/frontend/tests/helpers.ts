import type { SrResponse } from "../src/types.js";

// Minimal PNG header: signature + IHDR length/type + width/height. Enough for
// dimension checks and content hashing; decoding never happens client-side.
export function fakePngBytes(width: number, height: number, fill = 7): Uint8Array {
  const bytes = new Uint8Array(64).fill(fill);
  bytes.set([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a], 0);
  bytes.set([0x00, 0x00, 0x00, 0x0d], 8); // IHDR length
  bytes.set([0x49, 0x48, 0x44, 0x52], 12); // "IHDR"
  const view = new DataView(bytes.buffer);
  view.setUint32(16, width);
  view.setUint32(20, height);
  return bytes;
}

export function srResponse(overrides: Partial<SrResponse> = {}): SrResponse {
  return {
    image: "aGVsbG8=",
    metrics: { psnr: 26.5, ssim: 0.81, percep: 0.041 },
    model: "stage2_x",
    timing_ms: 12.5,
    ...overrides,
  };
}

export interface FetchCall {
  url: string;
  init?: RequestInit;
}

export function okJson(body: unknown): Response {
  return {
    ok: true,
    status: 200,
    statusText: "OK",
    json: async () => body,
  } as unknown as Response;
}

export function errJson(status: number, error: string): Response {
  return {
    ok: false,
    status,
    statusText: "ERR",
    json: async () => ({ error }),
  } as unknown as Response;
}
