export interface Metrics {
  psnr: number;
  ssim: number;
  percep: number;
}

export interface SrResponse {
  image: string; // base64 PNG
  metrics: Metrics | null;
  model: string;
  timing_ms: number;
}

export interface ModelEntry {
  name: string;
  stage: string;
  t_controllable: boolean;
  scale: number;
  default: boolean;
}

export type Mode = "knob" | "blend" | "compare";

export interface CachedResult {
  response: SrResponse;
  mode: Mode;
  value: number; // t or alpha that produced it
}
