"""Fidelity/realness metrics, the blend and data-consistency baselines, sweep drivers.

PSNR and SSIM are the fidelity axis; the perceptual distance and the Frechet
set distance over the same fixed feature pyramid are the realness axis. The
published reference rows those sweeps mirror live in the report templates for
human comparison and are never asserted against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import torch
import torch.nn.functional as F

from .degradation import DegradationSample, apply_operator, apply_operator_adjoint
from .diffusion import sr_at_t
from .errors import EmptySet, LengthMismatch, ShapeMismatch, TooSmall
from .losses import PercepExtractor, percep_dist

PSNR_CAP_DB = 99.0


@dataclass(frozen=True)
class MetricRow:
    key: float | str
    psnr: float
    ssim: float
    percep: float
    toy_fid: float


@dataclass(frozen=True)
class BlendSpec:
    alpha: float = 0.5
    grid: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

    def __post_init__(self):
        for a in (self.alpha, *self.grid):
            if not (0.0 <= a <= 1.0):
                raise ValueError(f"alpha values must lie in [0,1], got {a}")


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """10*log10(1/MSE) with peak 1.0, capped at 99 dB."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    mse = float(((a.to(torch.float64) - b.to(torch.float64)) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2 * sigma * sigma))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a: torch.Tensor, b: torch.Tensor, window: int = 11, sigma: float = 1.5) -> float:
    """Structural similarity, Gaussian window, stabilizers C1=(0.01)^2, C2=(0.03)^2 at peak 1."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    if min(a.shape[1], a.shape[2]) < window:
        raise TooSmall(f"need dims >= {window}, got {tuple(a.shape[1:])}")
    c1, c2 = 0.01**2, 0.03**2
    w = _gaussian_window(window, sigma)[None, None]
    x = a.to(torch.float64).unsqueeze(1)
    y = b.to(torch.float64).unsqueeze(1)
    mu_x = F.conv2d(x, w)
    mu_y = F.conv2d(y, w)
    sxx = F.conv2d(x * x, w) - mu_x * mu_x
    syy = F.conv2d(y * y, w) - mu_y * mu_y
    sxy = F.conv2d(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float((num / den).mean())


def pooled_features(ex: PercepExtractor, img: torch.Tensor) -> np.ndarray:
    """Spatially pooled pyramid features of one image, as a flat float64 vector."""
    with torch.no_grad():
        feats = ex.features(img)
    return np.concatenate([f.mean(dim=(1, 2)).to(torch.float64).numpy() for f in feats])


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Frechet distance between Gaussian fits of two feature collections [N, D]."""
    if feats_a.ndim != 2 or feats_b.ndim != 2 or feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise EmptySet("need at least two feature vectors per set")
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.cov(feats_a, rowvar=False)
    cov_b = np.cov(feats_b, rowvar=False)
    diff = mu_a - mu_b
    prod = cov_a @ cov_b
    sqrt_prod, _ = scipy.linalg.sqrtm(prod, disp=False)
    if not np.isfinite(sqrt_prod).all():
        jitter = 1e-6 * np.eye(cov_a.shape[0])
        sqrt_prod, _ = scipy.linalg.sqrtm((cov_a + jitter) @ (cov_b + jitter), disp=False)
    if np.iscomplexobj(sqrt_prod):
        sqrt_prod = sqrt_prod.real
    val = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(sqrt_prod))
    return max(val, 0.0)


def toy_fid(set_a: list[torch.Tensor], set_b: list[torch.Tensor], ex: PercepExtractor) -> float:
    """Frechet distance between Gaussian fits of pooled pyramid features of two image sets."""
    if not set_a or not set_b:
        raise EmptySet("toy_fid needs non-empty image sets")
    fa = np.stack([pooled_features(ex, img) for img in set_a])
    fb = np.stack([pooled_features(ex, img) for img in set_b])
    return frechet_distance(fa, fb)


def linear_blend(x_f: torch.Tensor, x_r: torch.Tensor, alpha: float) -> torch.Tensor:
    """Convex combination alpha*x_f + (1-alpha)*x_r, clamped; endpoints return inputs bitwise."""
    if x_f.shape != x_r.shape:
        raise ShapeMismatch(f"{tuple(x_f.shape)} vs {tuple(x_r.shape)}")
    alpha = float(alpha)
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0,1], got {alpha}")
    if alpha == 0.0:
        return x_r.clone()
    if alpha == 1.0:
        return x_f.clone()
    return (alpha * x_f + (1.0 - alpha) * x_r).clamp(0.0, 1.0)


def metric_row(
    key: float | str,
    outputs: list[torch.Tensor],
    gts: list[torch.Tensor],
    ex: PercepExtractor,
) -> MetricRow:
    if len(outputs) != len(gts):
        raise LengthMismatch(f"{len(outputs)} outputs vs {len(gts)} ground truths")
    ps = [psnr(o, g) for o, g in zip(outputs, gts)]
    ss = [ssim(o, g) for o, g in zip(outputs, gts)]
    pc = [float(percep_dist(ex, o, g)) for o, g in zip(outputs, gts)]
    fid = toy_fid(outputs, gts, ex) if len(outputs) >= 2 else 0.0
    return MetricRow(
        key=key,
        psnr=sum(ps) / len(ps),
        ssim=sum(ss) / len(ss),
        percep=sum(pc) / len(pc),
        toy_fid=fid,
    )


def sweep_alpha(
    x_f_set: list[torch.Tensor],
    x_r_set: list[torch.Tensor],
    gt_set: list[torch.Tensor],
    grid: tuple[float, ...],
    ex: PercepExtractor,
) -> list[MetricRow]:
    """One MetricRow per blend coefficient over aligned output sets."""
    if not (len(x_f_set) == len(x_r_set) == len(gt_set)):
        raise LengthMismatch("blend sweep needs aligned sets")
    rows = []
    for alpha in grid:
        blended = [linear_blend(f, r, alpha) for f, r in zip(x_f_set, x_r_set)]
        rows.append(metric_row(float(alpha), blended, gt_set, ex))
    return rows


DEFAULT_T_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def sweep_t(
    stage2_net,
    stage1_net,
    codec,
    lr_set: list[torch.Tensor],
    gt_set: list[torch.Tensor],
    t_grid: tuple[float, ...],
    ex: PercepExtractor,
    scale: int = 4,
    c: torch.Tensor | None = None,
) -> list[MetricRow]:
    """One MetricRow per knob value, running controllable inference on each LR input."""
    if len(lr_set) != len(gt_set):
        raise LengthMismatch("t sweep needs aligned LR/GT sets")
    rows = []
    for t in t_grid:
        with torch.no_grad():
            outs = [sr_at_t(stage2_net, stage1_net, codec, x, float(t), c=c, scale=scale) for x in lr_set]
        rows.append(metric_row(float(t), outs, gt_set, ex))
    return rows


def data_consistency_refine(
    x0: torch.Tensor,
    y: torch.Tensor,
    sample: DegradationSample,
    rho: float,
    iters: int,
) -> torch.Tensor:
    """Gradient descent on 0.5*||A x - y||^2: x <- x - rho * A^T (A x - y).

    The stated update in the source material carries an ascent sign; descent is
    what the cited solvers run and what converges, so descent is implemented.
    """
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    if x0.shape[1] % y.shape[1] or x0.shape[2] % y.shape[2]:
        raise ShapeMismatch(f"HR {tuple(x0.shape)} not an integer multiple of LR {tuple(y.shape)}")
    scale = x0.shape[1] // y.shape[1]
    if x0.shape[2] // y.shape[2] != scale:
        raise ShapeMismatch("inconsistent scale factors between axes")
    x = x0.to(torch.float64)
    y64 = y.to(torch.float64)
    for _ in range(iters):
        resid = apply_operator(x, sample, scale) - y64
        x = x - rho * apply_operator_adjoint(resid, sample, scale)
    return x.to(x0.dtype)
