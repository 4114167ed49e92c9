import { describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { chipText, exportBundle, makeComparePane, setDivider } from "../src/compare.js";
import { errJson, okJson, srResponse } from "./helpers.js";

describe("api client", () => {
  it("shapes /sr request bodies", async () => {
    const fetchFn = vi.fn(async () => okJson(srResponse()));
    const api = new ApiClient("http://svc", fetchFn as unknown as typeof fetch);
    await api.sr({ image: "abc=", t_knob: 0.6, model: "m1" });
    const [url, init] = fetchFn.mock.calls[0] as [string, RequestInit];
    expect(url).toBe("http://svc/sr");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({ image: "abc=", t_knob: 0.6, model: "m1" });
  });

  it("surfaces the service error body", async () => {
    const fetchFn = vi.fn(async () => errJson(400, "t_knob must lie in [0,1]"));
    const api = new ApiClient("", fetchFn as unknown as typeof fetch);
    await expect(api.sr({ image: "x", t_knob: 2 })).rejects.toThrow("t_knob must lie in [0,1]");
    await expect(api.sr({ image: "x", t_knob: 2 })).rejects.toBeInstanceOf(ApiError);
  });

  it("lists models and blends", async () => {
    const fetchFn = vi.fn(async (url: string) => {
      if (url.endsWith("/models")) {
        return okJson([{ name: "a", stage: "stage2", t_controllable: true, scale: 4, default: true }]);
      }
      return okJson({ image: "YmxlbmQ=" });
    });
    const api = new ApiClient("", fetchFn as unknown as typeof fetch);
    const models = await api.models();
    expect(models[0].t_controllable).toBe(true);
    expect(await api.blend("YQ==", "Yg==", 0.25)).toBe("YmxlbmQ=");
    const blendInit = fetchFn.mock.calls[1][1] as RequestInit;
    expect(JSON.parse(blendInit.body as string)).toEqual({ image_f: "YQ==", image_r: "Yg==", alpha: 0.25 });
  });
});

describe("compare pane", () => {
  const low = { value: 0.2, response: srResponse({ image: "bG93" }) };
  const high = { value: 0.8, response: srResponse({ image: "aGlnaA==" }) };

  it("orders panes by knob value regardless of pin order", () => {
    const pane = makeComparePane(high, low);
    expect(pane.left.value).toBe(0.2);
    expect(pane.right.value).toBe(0.8);
  });

  it("identical settings give identical panes", () => {
    const pane = makeComparePane(low, { ...low });
    expect(pane.left.response.image).toBe(pane.right.response.image);
  });

  it("divider stays in range", () => {
    const pane = makeComparePane(low, high);
    expect(setDivider(pane, 0).divider).toBe(0);
    expect(setDivider(pane, 1).divider).toBe(1);
    expect(() => setDivider(pane, 1.2)).toThrow();
  });

  it("export carries both images and the settings", () => {
    const bundle = exportBundle(makeComparePane(low, high, 0.3));
    expect(bundle.left_png_base64).toBe("bG93");
    expect(bundle.right_png_base64).toBe("aGlnaA==");
    expect(bundle.settings).toEqual({ left: 0.2, right: 0.8, divider: 0.3 });
  });

  it("chips render verbatim metric values", () => {
    expect(chipText("t=0.2", { psnr: 26.5, ssim: 0.81, percep: 0.041 })).toContain("26.50");
    expect(chipText("t=0.2", null)).toContain("no reference metrics");
  });
});
