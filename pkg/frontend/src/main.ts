// DOM wiring for the explorer. All state lives in SessionState; this file only
// translates events into state/controller calls and paints the result.

import { ApiClient } from "./api.js";
import { chipText, exportBundle, makeComparePane } from "./compare.js";
import { KnobController } from "./knob.js";
import { bytesToBase64 } from "./png.js";
import { DETENTS, SessionState } from "./state.js";
import type { SrResponse } from "./types.js";

const state = new SessionState();
const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function toast(message: string): void {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 4000);
}

function renderResult(response: SrResponse, fromCache: boolean): void {
  el<HTMLImageElement>("result").src = `data:image/png;base64,${response.image}`;
  el<HTMLSpanElement>("chip-model").textContent = `model: ${response.model}`;
  el<HTMLSpanElement>("chip-timing").textContent = `${response.timing_ms.toFixed(1)} ms${fromCache ? " (cached)" : ""}`;
  el<HTMLSpanElement>("chip-metrics").textContent = chipText(`t=${state.t.toFixed(2)}`, response.metrics);
}

const knob = new KnobController(state, api, {
  onResult: renderResult,
  onError: (err) => toast(`request failed: ${(err as Error).message ?? err}`),
});

function wireSlider(): void {
  const slider = el<HTMLInputElement>("t-slider");
  const detentBox = el<HTMLDivElement>("detents");
  for (const d of DETENTS) {
    const button = document.createElement("button");
    button.textContent = d.toFixed(1);
    button.addEventListener("click", () => {
      slider.value = String(d);
      knob.setKnob(d);
      el<HTMLSpanElement>("t-value").textContent = d.toFixed(2);
    });
    detentBox.appendChild(button);
  }
  slider.addEventListener("input", () => {
    const t = Number(slider.value);
    el<HTMLSpanElement>("t-value").textContent = t.toFixed(2);
    knob.setKnob(t);
  });
}

function wireUpload(): void {
  const input = el<HTMLInputElement>("upload");
  input.addEventListener("change", async () => {
    const file = input.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    try {
      const image = await state.uploadImage(bytes, bytesToBase64(bytes));
      el<HTMLImageElement>("preview").src = `data:image/png;base64,${image.base64}`;
      el<HTMLSpanElement>("upload-info").textContent = `${image.width}x${image.height} (${image.id.slice(0, 8)})`;
      knob.setKnob(state.t);
    } catch (err) {
      el<HTMLSpanElement>("upload-info").textContent = `${(err as Error).message}`;
    }
  });
}

function wirePinning(): void {
  el<HTMLButtonElement>("pin").addEventListener("click", () => {
    const snap = state.pin();
    if (!snap) {
      toast("nothing to pin yet: move the slider first");
      return;
    }
    if (state.pinned.length === 2) {
      const pane = makeComparePane(state.pinned[0], state.pinned[1]);
      el<HTMLImageElement>("compare-left").src = `data:image/png;base64,${pane.left.response.image}`;
      el<HTMLImageElement>("compare-right").src = `data:image/png;base64,${pane.right.response.image}`;
      el<HTMLSpanElement>("compare-chips").textContent =
        chipText(`t=${pane.left.value.toFixed(2)}`, pane.left.response.metrics) +
        "  |  " +
        chipText(`t=${pane.right.value.toFixed(2)}`, pane.right.response.metrics);
      const exporter = el<HTMLButtonElement>("export");
      exporter.onclick = () => {
        const blob = new Blob([JSON.stringify(exportBundle(pane), null, 2)], { type: "application/json" });
        const link = document.createElement("a");
        link.href = URL.createObjectURL(blob);
        link.download = "comparison.json";
        link.click();
      };
    }
  });
}

async function boot(): Promise<void> {
  wireSlider();
  wireUpload();
  wirePinning();
  try {
    const models = await api.models();
    const selector = el<HTMLSelectElement>("model");
    for (const entry of models) {
      const option = document.createElement("option");
      option.value = entry.name;
      option.textContent = `${entry.name} (${entry.stage}${entry.t_controllable ? ", knob" : ""})`;
      option.selected = entry.default;
      selector.appendChild(option);
    }
    const preferred = models.find((m) => m.default) ?? models[0];
    if (preferred) state.model = preferred.name;
    selector.addEventListener("change", () => {
      state.model = selector.value;
      knob.setKnob(state.t);
    });
  } catch (err) {
    toast(`service unreachable: ${(err as Error).message ?? err}`);
  }
}

void boot();
