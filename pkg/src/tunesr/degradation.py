"""Synthetic real-world degradation: randomized blur, fixed-factor downsampling, noise.

The realized operator per pair is A = bicubic_down(scale) . blur(kernel) applied
to the HR image, followed by additive Gaussian noise and a clamp to [0,1]. Blur
uses circular padding, which keeps A exactly linear and mean-preserving and makes
its adjoint available in closed form for the data-consistency baseline.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F

from .errors import EmptyCorpus, EvenSize, ShapeNotDivisible
from .imaging import PatchSpec, check_image, crop_patches, load_png, resize_bicubic


@dataclass(frozen=True)
class DegradationSpec:
    blur_sigma_range: tuple[float, float] = (0.4, 1.6)
    kernel_size: int = 9
    scale: int = 4
    noise_sigma_range: tuple[float, float] = (0.0, 0.04)
    seed: int = 0

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        for name, (lo, hi) in (
            ("blur_sigma_range", self.blur_sigma_range),
            ("noise_sigma_range", self.noise_sigma_range),
        ):
            if not (0 <= lo <= hi):
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")


@dataclass(frozen=True)
class DegradationSample:
    """Realized degradation parameters for one LR/HR pair."""

    blur_sigma: float
    noise_sigma: float
    kernel: torch.Tensor  # [k,k], nonnegative, sums to 1

    def __post_init__(self):
        total = float(self.kernel.sum())
        if abs(total - 1.0) > 1e-9 or float(self.kernel.min()) < 0:
            raise ValueError("kernel must be nonnegative and sum to 1")


def gaussian_kernel(sigma: float, size: int) -> torch.Tensor:
    """Isotropic Gaussian sampled at integer offsets, normalized; sigma=0 is the delta."""
    if size % 2 == 0 or size < 1:
        raise EvenSize(f"kernel size must be odd, got {size}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    half = size // 2
    k = torch.zeros((size, size), dtype=torch.float64)
    if sigma == 0.0:
        k[half, half] = 1.0
        return k
    coords = torch.arange(size, dtype=torch.float64) - half
    r2 = coords[:, None] ** 2 + coords[None, :] ** 2
    k = torch.exp(-r2 / (2.0 * sigma * sigma))
    return k / k.sum()


def apply_blur(img: torch.Tensor, kernel: torch.Tensor, adjoint: bool = False) -> torch.Tensor:
    """Per-channel 2D convolution with circular padding.

    The adjoint is correlation, i.e. convolution with the flipped kernel;
    for the symmetric Gaussian the two coincide.
    """
    check_image(img)
    k = kernel.to(torch.float64)
    if adjoint:
        k = torch.flip(k, dims=(0, 1))
    c = img.shape[0]
    pad = k.shape[0] // 2
    x = img.to(torch.float64).unsqueeze(0)
    x = F.pad(x, (pad, pad, pad, pad), mode="circular")
    weight = k.flip(0, 1).expand(c, 1, -1, -1)  # conv2d cross-correlates; flip to convolve
    out = F.conv2d(x, weight, groups=c).squeeze(0)
    return out.to(img.dtype)


def apply_operator(x_hr: torch.Tensor, sample: DegradationSample, scale: int) -> torch.Tensor:
    """The linear part of the degradation: blur then bicubic downsample by 1/scale."""
    _, h, w = x_hr.shape
    if h % scale or w % scale:
        raise ShapeNotDivisible(f"{h}x{w} not divisible by scale {scale}")
    blurred = apply_blur(x_hr, sample.kernel)
    if scale == 1:
        return blurred
    return resize_bicubic(blurred, 1.0 / scale)


def apply_operator_adjoint(y_lr: torch.Tensor, sample: DegradationSample, scale: int) -> torch.Tensor:
    """Exact adjoint of apply_operator (transposed resample matrices, flipped-kernel blur)."""
    from .imaging import resample_matrix

    check_image(y_lr)
    _, h_lr, w_lr = y_lr.shape
    if scale == 1:
        up = y_lr.to(torch.float64)
    else:
        rows = resample_matrix(h_lr, h_lr * scale)
        cols = resample_matrix(w_lr, w_lr * scale)
        up = torch.matmul(torch.matmul(rows.T, y_lr.to(torch.float64)), cols)
    return apply_blur(up, sample.kernel, adjoint=True).to(y_lr.dtype)


def draw_sample(spec: DegradationSpec, rng: torch.Generator) -> DegradationSample:
    """Draw per-pair degradation parameters uniformly from the spec ranges."""
    u = torch.rand(2, generator=rng, dtype=torch.float64)
    blo, bhi = spec.blur_sigma_range
    nlo, nhi = spec.noise_sigma_range
    blur_sigma = float(blo + (bhi - blo) * u[0])
    noise_sigma = float(nlo + (nhi - nlo) * u[1])
    return DegradationSample(
        blur_sigma=blur_sigma,
        noise_sigma=noise_sigma,
        kernel=gaussian_kernel(blur_sigma, spec.kernel_size),
    )


def degrade(
    x_hr: torch.Tensor,
    spec: DegradationSpec,
    rng: torch.Generator,
    clamp: bool = True,
) -> tuple[torch.Tensor, DegradationSample]:
    """Produce the LR observation: clamp(A x + n, 0, 1) with freshly drawn parameters.

    Identical (spec, rng state) gives bitwise-identical output. `clamp=False`
    exposes the pre-clamp observation for statistical checks.
    """
    check_image(x_hr)
    sample = draw_sample(spec, rng)
    y = apply_operator(x_hr, sample, spec.scale)
    if sample.noise_sigma > 0:
        noise = torch.randn(y.shape, generator=rng, dtype=torch.float64)
        y = y + (sample.noise_sigma * noise).to(y.dtype)
    if clamp:
        y = y.clamp(0.0, 1.0)
    return y, sample


def list_corpus(corpus_dir: str | os.PathLike) -> list[Path]:
    paths = sorted(Path(corpus_dir).glob("*.png"))
    if not paths:
        raise EmptyCorpus(f"no PNG files in {os.fspath(corpus_dir)!r}")
    return paths


def synth_dataset(
    corpus_dir: str | os.PathLike,
    spec: DegradationSpec,
    patch: PatchSpec,
    n_pairs: int,
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Deterministic list of (x_LR, x_GT) pairs cropped from a PNG corpus.

    Patches are pooled in raster order over the sorted corpus, shuffled by a
    permutation seeded from patch.seed, and degraded with per-pair generators
    derived from spec.seed so pair i is reproducible in isolation.
    """
    if patch.size % spec.scale:
        raise ShapeNotDivisible(f"patch size {patch.size} not divisible by scale {spec.scale}")
    pool: list[torch.Tensor] = []
    for path in list_corpus(corpus_dir):
        img = load_png(path)
        if min(img.shape[1], img.shape[2]) < patch.size:
            continue
        pool.extend(crop_patches(img, patch))
    if not pool:
        raise EmptyCorpus(f"corpus {os.fspath(corpus_dir)!r} has no image >= {patch.size}px")
    shuffle_rng = torch.Generator().manual_seed(patch.seed)
    order = torch.randperm(len(pool), generator=shuffle_rng).tolist()
    pairs = []
    for i in range(n_pairs):
        x_gt = pool[order[i % len(order)]]
        pair_rng = torch.Generator().manual_seed(spec.seed * 1_000_003 + i)
        x_lr, _ = degrade(x_gt, spec, pair_rng)
        pairs.append((x_lr, x_gt))
    return pairs
