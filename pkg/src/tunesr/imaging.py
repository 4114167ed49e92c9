"""Image containers and deterministic pixel-level operations.

The pixel currency everywhere is a torch float tensor of shape [C, H, W]
(C in {1, 3}) with values nominally in [0, 1]. PNG is the only file format.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass

import cv2
import numpy as np
import torch

from .errors import (
    DegenerateOutput,
    IoFailure,
    MissingFile,
    PatchTooLarge,
    UnsupportedFormat,
)

BICUBIC_A = -0.5  # Catmull-Rom style kernel parameter


@dataclass(frozen=True)
class PatchSpec:
    size: int
    stride: int
    seed: int = 0

    def __post_init__(self):
        if self.size < 8:
            raise ValueError(f"patch size must be >= 8, got {self.size}")
        if self.stride < 1:
            raise ValueError(f"patch stride must be >= 1, got {self.stride}")


def check_image(img: torch.Tensor) -> torch.Tensor:
    """Validate the [C,H,W] layout and finiteness; returns the input."""
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise UnsupportedFormat(f"expected [C,H,W] with C in {{1,3}}, got {tuple(img.shape)}")
    if not torch.isfinite(img).all():
        raise UnsupportedFormat("image contains non-finite values")
    return img


def tensor_from_png_bytes(data: bytes) -> torch.Tensor:
    """Decode 8- or 16-bit PNG bytes (grayscale or RGB) to a [C,H,W] float tensor in [0,1]."""
    raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise UnsupportedFormat("cannot decode bytes as PNG")
    if raw.dtype == np.uint8:
        peak = 255.0
    elif raw.dtype == np.uint16:
        peak = 65535.0
    else:
        raise UnsupportedFormat(f"unsupported PNG sample type {raw.dtype}")
    if raw.ndim == 2:
        planes = raw[None, :, :]
    elif raw.ndim == 3 and raw.shape[2] == 3:
        planes = raw[:, :, ::-1].transpose(2, 0, 1)  # BGR -> RGB, then planar
    else:
        raise UnsupportedFormat("unsupported channel count")
    return torch.from_numpy(np.ascontiguousarray(planes)).to(torch.float32) / peak


def png_bytes_from_tensor(img: torch.Tensor) -> bytes:
    """Encode as 8-bit PNG; quantization is round-half-up of v*255, clamped."""
    check_image(img)
    arr = img.detach().to(torch.float64).numpy()
    bytes_ = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    if bytes_.shape[0] == 1:
        out = bytes_[0]
    else:
        out = bytes_.transpose(1, 2, 0)[:, :, ::-1]  # planar RGB -> HWC BGR
    ok, encoded = cv2.imencode(".png", np.ascontiguousarray(out))
    if not ok:
        raise IoFailure("PNG encoding failed")
    return encoded.tobytes()


def quantize_unit8(img: torch.Tensor) -> torch.Tensor:
    """Apply exactly the 8-bit PNG quantization without encoding: round-half-up, clamp, /255."""
    check_image(img)
    q = torch.clamp(torch.floor(img.detach().to(torch.float64) * 255.0 + 0.5), 0, 255)
    return (q / 255.0).to(torch.float32)


def load_png(path: str | os.PathLike) -> torch.Tensor:
    """Load an 8- or 16-bit PNG file into a [C,H,W] float tensor in [0,1]."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(path)
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return tensor_from_png_bytes(data)
    except UnsupportedFormat as err:
        raise UnsupportedFormat(f"{path!r}: {err}") from err


def save_png(img: torch.Tensor, path: str | os.PathLike) -> None:
    """Write an 8-bit PNG file."""
    data = png_bytes_from_tensor(img)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as err:
        raise IoFailure(f"failed to write {path!r}: {err}") from err


def cubic_kernel(x: float, a: float = BICUBIC_A) -> float:
    """Keys cubic interpolation kernel."""
    x = abs(x)
    if x < 1.0:
        return (a + 2.0) * x**3 - (a + 3.0) * x**2 + 1.0
    if x < 2.0:
        return a * (x**3 - 5.0 * x**2 + 8.0 * x - 4.0)
    return 0.0


@functools.lru_cache(maxsize=256)
def resample_matrix(n_out: int, n_in: int) -> torch.Tensor:
    """Dense [n_out, n_in] bicubic interpolation matrix for one axis.

    Source coordinates are clamped at the borders; each row is normalized so
    constants are preserved. The matrix is the exact linear map applied by
    resize_bicubic along that axis, which also makes the adjoint available as
    the plain transpose.
    """
    w = torch.zeros((n_out, n_in), dtype=torch.float64)
    ratio = n_in / n_out
    for i in range(n_out):
        s = (i + 0.5) * ratio - 0.5
        base = math.floor(s)
        f = s - base
        taps = [cubic_kernel(f + 1.0), cubic_kernel(f), cubic_kernel(1.0 - f), cubic_kernel(2.0 - f)]
        total = sum(taps)
        for k, tap in enumerate(taps):
            j = min(max(base - 1 + k, 0), n_in - 1)
            w[i, j] += tap / total
    return w


def resize_bicubic(img: torch.Tensor, scale: float) -> torch.Tensor:
    """Separable bicubic resampling; output dims are round-half-up of dim*scale."""
    check_image(img)
    if scale <= 0:
        raise DegenerateOutput(f"scale must be positive, got {scale}")
    _, h, w = img.shape
    h_out = int(math.floor(h * scale + 0.5))
    w_out = int(math.floor(w * scale + 0.5))
    if h_out < 1 or w_out < 1:
        raise DegenerateOutput(f"output dims {h_out}x{w_out} from {h}x{w} at scale {scale}")
    if h_out == h and w_out == w and scale == 1.0:
        return img.clone()
    rows = resample_matrix(h_out, h)
    cols = resample_matrix(w_out, w)
    x = img.to(torch.float64)
    out = torch.matmul(torch.matmul(rows, x), cols.T)
    return out.to(img.dtype)


def crop_patches(img: torch.Tensor, spec: PatchSpec) -> list[torch.Tensor]:
    """Raster-order tiling with the given stride; partial edge tiles are dropped."""
    check_image(img)
    _, h, w = img.shape
    if spec.size > min(h, w):
        raise PatchTooLarge(f"patch {spec.size} exceeds image {h}x{w}")
    patches = []
    for top in range(0, h - spec.size + 1, spec.stride):
        for left in range(0, w - spec.size + 1, spec.stride):
            patches.append(img[:, top : top + spec.size, left : left + spec.size].clone())
    return patches
