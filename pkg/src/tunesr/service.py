"""HTTP inference service: the controllable knob and the blend baseline over JSON+base64.

Weight snapshots are immutable after load; requests never mutate the registry,
so concurrent inference is safe and byte-identical requests produce
byte-identical response images.
"""

from __future__ import annotations

import base64
import binascii
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .checkpoint import load_model_checkpoint
from .diffusion import sr_at_t, student_restore
from .errors import UnsupportedFormat
from .evaluation import linear_blend, psnr, ssim
from .imaging import png_bytes_from_tensor, quantize_unit8, tensor_from_png_bytes
from .losses import PercepExtractor, percep_dist
from .nets import DenoiserNet, IdentityCodec, LearnedCodec, default_conditioning

MAX_INPUT_SIDE = 512


@dataclass
class ModelSnapshot:
    name: str
    stage: str
    restorer: DenoiserNet
    flow: DenoiserNet | None
    scale: int
    codec_kind: str
    percep_seed: int
    percep_channels: tuple[int, ...]

    @property
    def t_controllable(self) -> bool:
        return self.flow is not None

    def make_codec(self):
        if self.codec_kind == "learned":
            return LearnedCodec()
        return IdentityCodec()


@dataclass
class ModelRegistry:
    models: dict[str, ModelSnapshot] = field(default_factory=dict)

    @property
    def default_name(self) -> str | None:
        stage2 = sorted(n for n, s in self.models.items() if s.t_controllable)
        if stage2:
            return stage2[-1]
        any_names = sorted(self.models)
        return any_names[-1] if any_names else None


def snapshot_from_checkpoint(name: str, path) -> ModelSnapshot:
    nets, meta = load_model_checkpoint(path)
    for net in nets.values():
        for p in net.parameters():
            p.requires_grad_(False)
    extra = meta.get("extra", {})
    return ModelSnapshot(
        name=name,
        stage=meta.get("stage", "unknown"),
        restorer=nets["restorer"],
        flow=nets.get("flow"),
        scale=int(extra.get("scale", 4)),
        codec_kind=extra.get("codec_kind", "identity"),
        percep_seed=int(extra.get("percep_seed", 101)),
        percep_channels=tuple(extra.get("percep_channels", (6, 8, 10))),
    )


def build_registry(models_dir) -> ModelRegistry:
    registry = ModelRegistry()
    for path in sorted(Path(models_dir).glob("*.ckpt")):
        registry.models[path.stem] = snapshot_from_checkpoint(path.stem, path)
    return registry


class SrRequest(BaseModel):
    image: str  # base64 PNG
    t_knob: float = 0.0
    model: str | None = None
    gt: str | None = None  # optional base64 PNG at output resolution


class BlendRequest(BaseModel):
    image_f: str
    image_r: str
    alpha: float


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _decode_b64(data: str) -> bytes:
    try:
        return base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as err:
        raise ValueError(f"invalid base64 payload: {err}") from err


def create_app(registry: ModelRegistry, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="tunesr", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    percep_cache: dict[tuple[int, tuple[int, ...]], PercepExtractor] = {}

    @app.exception_handler(Exception)
    async def on_unexpected(request: Request, exc: Exception):
        return _error(500, f"{type(exc).__name__}: {exc}")

    from fastapi.exceptions import RequestValidationError

    @app.exception_handler(RequestValidationError)
    async def on_validation(request: Request, exc: RequestValidationError):
        return _error(400, f"malformed payload: {exc.errors()[:1]}")

    @app.get("/healthz")
    def healthz():
        if not registry.models:
            return _error(503, "no models loaded")
        return {"status": "ok", "version": __version__, "models": len(registry.models)}

    @app.get("/models")
    def models():
        return [
            {
                "name": snap.name,
                "stage": snap.stage,
                "t_controllable": snap.t_controllable,
                "scale": snap.scale,
                "default": snap.name == registry.default_name,
            }
            for _, snap in sorted(registry.models.items())
        ]

    def _percep_for(snap: ModelSnapshot) -> PercepExtractor:
        key = (snap.percep_seed, snap.percep_channels)
        if key not in percep_cache:
            percep_cache[key] = PercepExtractor(seed=snap.percep_seed, channels=snap.percep_channels)
        return percep_cache[key]

    @app.post("/sr")
    def sr(req: SrRequest):
        if not registry.models:
            return _error(503, "no models loaded")
        name = req.model or registry.default_name
        if name not in registry.models:
            return _error(404, f"unknown model {name!r}")
        snap = registry.models[name]
        if not (0.0 <= req.t_knob <= 1.0):
            return _error(400, f"t_knob must lie in [0,1], got {req.t_knob}")
        if req.t_knob > 0.0 and not snap.t_controllable:
            return _error(400, f"model {name!r} is not t-controllable; use t_knob=0")
        try:
            raw = _decode_b64(req.image)
        except ValueError as err:
            return _error(400, str(err))
        try:
            x_lr = tensor_from_png_bytes(raw)
        except UnsupportedFormat as err:
            return _error(422, str(err))
        if max(x_lr.shape[1], x_lr.shape[2]) > MAX_INPUT_SIDE:
            return _error(413, f"input exceeds {MAX_INPUT_SIDE}px cap")
        if x_lr.shape[0] != 3:
            x_lr = x_lr.expand(3, -1, -1)
        codec = snap.make_codec()
        c = default_conditioning(snap.restorer.cond_dim)
        started = time.perf_counter()
        with torch.no_grad():
            if snap.t_controllable:
                out = sr_at_t(snap.flow, snap.restorer, codec, x_lr, req.t_knob, c=c, scale=snap.scale)
            else:
                _, out = student_restore(snap.restorer, codec, x_lr, scale=snap.scale, c=c)
        elapsed_ms = (time.perf_counter() - started) * 1e3
        metrics = None
        if req.gt is not None:
            try:
                gt = tensor_from_png_bytes(_decode_b64(req.gt))
            except (ValueError, UnsupportedFormat) as err:
                return _error(400, f"bad gt payload: {err}")
            if gt.shape != out.shape:
                return _error(400, f"gt shape {tuple(gt.shape)} != output {tuple(out.shape)}")
            delivered = quantize_unit8(out)  # metrics describe the returned 8-bit image
            metrics = {
                "psnr": psnr(delivered, gt),
                "ssim": ssim(delivered, gt),
                "percep": float(percep_dist(_percep_for(snap), delivered, gt)),
            }
        return {
            "image": base64.b64encode(png_bytes_from_tensor(out)).decode("ascii"),
            "metrics": metrics,
            "model": name,
            "timing_ms": elapsed_ms,
        }

    @app.post("/blend")
    def blend(req: BlendRequest):
        if not (0.0 <= req.alpha <= 1.0):
            return _error(400, f"alpha must lie in [0,1], got {req.alpha}")
        try:
            x_f = tensor_from_png_bytes(_decode_b64(req.image_f))
            x_r = tensor_from_png_bytes(_decode_b64(req.image_r))
        except (ValueError, UnsupportedFormat) as err:
            return _error(400, str(err))
        if x_f.shape != x_r.shape:
            return _error(400, f"shape mismatch {tuple(x_f.shape)} vs {tuple(x_r.shape)}")
        out = linear_blend(x_f, x_r, req.alpha)
        return {"image": base64.b64encode(png_bytes_from_tensor(out)).decode("ascii")}

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="explorer")

    return app
