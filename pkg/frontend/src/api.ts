import type { ModelEntry, SrResponse } from "./types.js";

export interface SrRequestBody {
  image: string;
  t_knob: number;
  model?: string;
  gt?: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function readError(res: Response): Promise<ApiError> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") detail = body.error;
  } catch {
    // keep the status text
  }
  return new ApiError(res.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  async healthz(): Promise<boolean> {
    const res = await this.fetchFn(`${this.baseUrl}/healthz`);
    return res.ok;
  }

  async models(): Promise<ModelEntry[]> {
    const res = await this.fetchFn(`${this.baseUrl}/models`);
    if (!res.ok) throw await readError(res);
    return (await res.json()) as ModelEntry[];
  }

  async sr(body: SrRequestBody, signal?: AbortSignal): Promise<SrResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/sr`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!res.ok) throw await readError(res);
    return (await res.json()) as SrResponse;
  }

  async blend(imageF: string, imageR: string, alpha: number): Promise<string> {
    const res = await this.fetchFn(`${this.baseUrl}/blend`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image_f: imageF, image_r: imageR, alpha }),
    });
    if (!res.ok) throw await readError(res);
    return ((await res.json()) as { image: string }).image;
  }
}
