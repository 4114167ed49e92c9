// Side-by-side comparison of two pinned knob settings with a swipe divider.

import type { PinnedSnapshot } from "./state.js";
import type { Metrics } from "./types.js";

export interface ComparePane {
  left: PinnedSnapshot;
  right: PinnedSnapshot;
  divider: number; // in [0,1]
}

export function makeComparePane(a: PinnedSnapshot, b: PinnedSnapshot, divider = 0.5): ComparePane {
  if (!(divider >= 0 && divider <= 1)) {
    throw new Error(`divider must lie in [0,1], got ${divider}`);
  }
  const [left, right] = a.value <= b.value ? [a, b] : [b, a];
  return { left, right, divider };
}

export function setDivider(pane: ComparePane, divider: number): ComparePane {
  if (!(divider >= 0 && divider <= 1)) {
    throw new Error(`divider must lie in [0,1], got ${divider}`);
  }
  return { ...pane, divider };
}

export function chipText(label: string, metrics: Metrics | null): string {
  if (!metrics) return `${label}: no reference metrics`;
  return `${label}: psnr ${metrics.psnr.toFixed(2)} dB, ssim ${metrics.ssim.toFixed(4)}, percep ${metrics.percep.toFixed(5)}`;
}

export interface ExportBundle {
  settings: { left: number; right: number; divider: number };
  left_png_base64: string;
  right_png_base64: string;
}

export function exportBundle(pane: ComparePane): ExportBundle {
  return {
    settings: { left: pane.left.value, right: pane.right.value, divider: pane.divider },
    left_png_base64: pane.left.response.image,
    right_png_base64: pane.right.response.image,
  };
}
