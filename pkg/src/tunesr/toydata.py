"""Procedural toy images: smooth shading, blobs, oriented texture, soft edges.

Stands in for a photographic corpus so the whole pipeline runs from nothing.
"""

from __future__ import annotations

import os
from pathlib import Path

import torch

from .imaging import save_png


def make_toy_image(size: int, seed: int) -> torch.Tensor:
    """One deterministic [3,size,size] image in [0,1] with natural-ish statistics."""
    g = torch.Generator().manual_seed(seed)
    ys, xs = torch.meshgrid(
        torch.linspace(0, 1, size, dtype=torch.float64),
        torch.linspace(0, 1, size, dtype=torch.float64),
        indexing="ij",
    )

    def rand(lo, hi, n=1):
        return lo + (hi - lo) * torch.rand(n, generator=g, dtype=torch.float64)

    # smooth base shading
    ax, ay, off = rand(-1.5, 1.5), rand(-1.5, 1.5), rand(0.3, 0.7)
    base = off + 0.25 * (ax * xs + ay * ys)
    img = base.expand(3, -1, -1).clone()

    # soft blobs with mild per-channel tint
    for _ in range(int(rand(2, 5).item())):
        cx, cy, r = rand(0.1, 0.9), rand(0.1, 0.9), rand(0.05, 0.25)
        amp = rand(-0.35, 0.35)
        blob = amp * torch.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * r * r))
        tint = 1.0 + 0.3 * torch.rand(3, 1, 1, generator=g, dtype=torch.float64) - 0.15
        img = img + blob * tint

    # oriented sinusoidal texture, one coarse and one fine component
    for flo, fhi, alo, ahi in ((3, 9, 0.05, 0.12), (10, 22, 0.05, 0.14)):
        fx, fy, ph = rand(flo, fhi), rand(flo, fhi), rand(0, 6.28)
        tex_amp = rand(alo, ahi)
        mask_cx, mask_cy, mask_r = rand(0.2, 0.8), rand(0.2, 0.8), rand(0.2, 0.5)
        mask = torch.exp(-((xs - mask_cx) ** 2 + (ys - mask_cy) ** 2) / (2 * mask_r * mask_r))
        img = img + tex_amp * mask * torch.sin(2 * torch.pi * (fx * xs + fy * ys) + ph)

    # a couple of soft-edged rectangles
    for _ in range(2):
        x0, y0 = rand(0.05, 0.6), rand(0.05, 0.6)
        wdt, hgt = rand(0.15, 0.35), rand(0.15, 0.35)
        sharp = rand(30, 90)
        box = (
            torch.sigmoid(sharp * (xs - x0))
            * torch.sigmoid(sharp * (x0 + wdt - xs))
            * torch.sigmoid(sharp * (ys - y0))
            * torch.sigmoid(sharp * (y0 + hgt - ys))
        )
        img = img + rand(-0.25, 0.25) * box

    lo, hi = img.min(), img.max()
    img = 0.05 + 0.9 * (img - lo) / (hi - lo + 1e-12)
    return img.to(torch.float32)


def make_toy_corpus(out_dir: str | os.PathLike, n_images: int, size: int, seed: int) -> list[Path]:
    """Write n deterministic toy PNGs into out_dir; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n_images):
        p = out / f"toy_{i:04d}.png"
        save_png(make_toy_image(size, seed * 100_003 + i), p)
        paths.append(p)
    return paths
