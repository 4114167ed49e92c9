"""Small neural components: timestep-conditioned residual denoiser, codecs, low-rank adapter.

The denoiser is a residual CNN with FiLM-style timestep modulation, standing in
for a full UNet: all the training objectives only require a function
eps(z, t, c) with output shaped like z. The output head is zero-initialized so
the init-state behavior of every consumer is analytically known.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn
from torch.func import functional_call

from .errors import RankMismatch, ShapeMismatch, ShapeNotDivisible


T_EMBED_MAX_FREQ = 1.5


def sinusoidal_embedding(t: float, dim: int, dtype: torch.dtype) -> torch.Tensor:
    """Classic sin/cos positional features of a scalar timestep in [0,1]."""
    half = dim // 2
    freqs = torch.exp(torch.linspace(0.0, math.log(T_EMBED_MAX_FREQ), half, dtype=dtype))
    ang = freqs * float(t)
    return torch.cat([torch.sin(ang), torch.cos(ang)])


class ResBlock(nn.Module):
    def __init__(self, width: int, t_embed_dim: int):
        super().__init__()
        self.film = nn.Linear(t_embed_dim, 2 * width)
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, h: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        gamma, beta = self.film(emb).chunk(2)
        y = self.conv1(h)
        y = y * (1.0 + gamma[None, :, None, None]) + beta[None, :, None, None]
        y = F.silu(y)
        y = self.conv2(y)
        return h + y


class DenoiserNet(nn.Module):
    """eps-style network eps(z, t, c) -> tensor shaped like z."""

    def __init__(
        self,
        width: int = 16,
        depth: int = 2,
        t_embed_dim: int = 16,
        in_channels: int = 3,
        cond_dim: int = 4,
    ):
        super().__init__()
        if width < 1 or depth < 1 or t_embed_dim < 2 or t_embed_dim % 2:
            raise ValueError("width/depth >= 1 and even t_embed_dim >= 2 required")
        self.width = width
        self.depth = depth
        self.t_embed_dim = t_embed_dim
        self.in_channels = in_channels
        self.cond_dim = cond_dim
        self.t_proj = nn.Linear(t_embed_dim, t_embed_dim)
        self.c_proj = nn.Linear(cond_dim, width)
        self.conv_in = nn.Conv2d(in_channels, width, 3, padding=1)
        self.blocks = nn.ModuleList(ResBlock(width, t_embed_dim) for _ in range(depth))
        self.conv_out = nn.Conv2d(width, in_channels, 3, padding=1)

    def forward(self, z: torch.Tensor, t: float, c: torch.Tensor | None = None) -> torch.Tensor:
        if z.ndim != 3 or z.shape[0] != self.in_channels:
            raise ShapeMismatch(f"expected [{self.in_channels},H,W], got {tuple(z.shape)}")
        t = float(t)
        if not (0.0 <= t <= 1.0):
            raise ValueError(f"timestep must lie in [0,1], got {t}")
        dtype = self.conv_in.weight.dtype
        if c is None:
            c = torch.zeros(self.cond_dim, dtype=dtype)
        if c.shape != (self.cond_dim,):
            raise ShapeMismatch(f"conditioning must be [{self.cond_dim}], got {tuple(c.shape)}")
        emb = F.silu(self.t_proj(sinusoidal_embedding(t, self.t_embed_dim, dtype)))
        h = self.conv_in(z.unsqueeze(0)) + self.c_proj(c.to(dtype))[None, :, None, None]
        for block in self.blocks:
            h = block(h, emb)
        return self.conv_out(h).squeeze(0)

    @property
    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def expected_param_count(
    width: int, depth: int, t_embed_dim: int, in_channels: int = 3, cond_dim: int = 4
) -> int:
    """Closed-form parameter count of DenoiserNet for the given shape."""
    te, w, cin, dc = t_embed_dim, width, in_channels, cond_dim
    t_proj = te * te + te
    c_proj = dc * w + w
    conv_in = cin * w * 9 + w
    per_block = (te * 2 * w + 2 * w) + 2 * (w * w * 9 + w)
    conv_out = w * cin * 9 + cin
    return t_proj + c_proj + conv_in + depth * per_block + conv_out


def init_denoiser(
    seed: int,
    width: int,
    depth: int,
    t_embed_dim: int,
    in_channels: int = 3,
    cond_dim: int = 4,
    dtype: torch.dtype = torch.float32,
) -> DenoiserNet:
    """Deterministic construction: seeded fan-in-scaled weights, zero biases.

    The output head and the per-block modulation start at zero: the net computes
    exactly zero at init, and timestep conditioning only takes effect once
    training pushes the modulation weights away from neutral.
    """
    net = DenoiserNet(width, depth, t_embed_dim, in_channels, cond_dim)
    g = torch.Generator().manual_seed(seed)
    for name, p in sorted(net.named_parameters()):
        with torch.no_grad():
            if name.startswith("conv_out") or name.endswith(".bias") or ".film." in name:
                p.zero_()
            else:
                fan_in = p.shape[1] * (p.shape[2] * p.shape[3] if p.ndim == 4 else 1)
                vals = torch.randn(p.shape, generator=g, dtype=torch.float64)
                p.copy_((vals / math.sqrt(fan_in)).to(p.dtype))
    return net.to(dtype)


def default_conditioning(dim: int = 4, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """The zero conditioning vector used when no prompt embedding exists."""
    return torch.zeros(dim, dtype=dtype)


# ---------------------------------------------------------------------------
# codecs


class IdentityCodec:
    """Latents are pixels; decode clamps back to [0,1]."""

    kind = "identity"
    spatial_factor = 1

    def __init__(self, channels: int = 3):
        self.latent_channels = channels

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return x

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return z.clamp(0.0, 1.0)


class LearnedCodec(nn.Module):
    """Small conv encoder/decoder pair with a strided bottleneck, MSE-pretrained.

    The latent keeps channels * factor^2 channels, so the map has lossless
    capacity and a short pretraining run reaches high reconstruction quality.
    """

    kind = "learned"

    def __init__(self, spatial_factor: int = 2, channels: int = 3, hidden: int = 24, seed: int = 0):
        super().__init__()
        self.spatial_factor = spatial_factor
        self.channels = channels
        self.latent_channels = channels * spatial_factor * spatial_factor
        f = spatial_factor
        self.enc_in = nn.Conv2d(channels, hidden, 3, padding=1)
        self.enc_down = nn.Conv2d(hidden, self.latent_channels, 3, stride=f, padding=1)
        self.dec_in = nn.Conv2d(self.latent_channels, hidden, 3, padding=1)
        self.dec_out = nn.Conv2d(hidden, channels * f * f, 3, padding=1)
        self.shuffle = nn.PixelShuffle(f)
        g = torch.Generator().manual_seed(seed)
        for _, p in sorted(self.named_parameters()):
            with torch.no_grad():
                fan_in = p.shape[1] * 9 if p.ndim == 4 else 1
                p.copy_(torch.randn(p.shape, generator=g, dtype=torch.float64).to(p.dtype) / math.sqrt(fan_in))

    def _check(self, x: torch.Tensor):
        if x.shape[1] % self.spatial_factor or x.shape[2] % self.spatial_factor:
            raise ShapeNotDivisible(
                f"dims {tuple(x.shape[1:])} not divisible by factor {self.spatial_factor}"
            )

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        self._check(x)
        h = F.silu(self.enc_in(x.unsqueeze(0)))
        return self.enc_down(h).squeeze(0)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        h = F.silu(self.dec_in(z.unsqueeze(0)))
        y = self.shuffle(self.dec_out(h)).squeeze(0)
        return y.clamp(0.0, 1.0)


Codec = IdentityCodec | LearnedCodec


# ---------------------------------------------------------------------------
# low-rank adapter


@dataclass
class LowRankAdapter:
    """Per-layer (A, B) factor pairs; the effective weight is W + scale * (B @ A)."""

    rank: int
    scale: float
    layers: dict[str, tuple[torch.Tensor, torch.Tensor]] = field(default_factory=dict)

    def parameters(self) -> list[torch.Tensor]:
        out = []
        for a, b in self.layers.values():
            out.extend([a, b])
        return out

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())


def init_adapter(net: DenoiserNet, rank: int = 4, scale: float = 1.0, seed: int = 0) -> LowRankAdapter:
    """Rank-r factors on every conv/linear weight; B starts at zero so the adapter is a no-op."""
    g = torch.Generator().manual_seed(seed)
    adapter = LowRankAdapter(rank=rank, scale=scale)
    for name, p in sorted(net.named_parameters()):
        if not name.endswith(".weight"):
            continue
        out_dim = p.shape[0]
        fan_in = p.numel() // out_dim
        a = torch.randn((rank, fan_in), generator=g, dtype=torch.float64).to(p.dtype) / math.sqrt(fan_in)
        b = torch.zeros((out_dim, rank), dtype=p.dtype)
        adapter.layers[name] = (a, b)
    return adapter


def _check_adapter(net: DenoiserNet, adapter: LowRankAdapter):
    params = dict(net.named_parameters())
    for name, (a, b) in adapter.layers.items():
        if name not in params:
            raise RankMismatch(f"adapter targets unknown layer {name!r}")
        w = params[name]
        if a.shape != (adapter.rank, w.numel() // w.shape[0]) or b.shape != (w.shape[0], adapter.rank):
            raise RankMismatch(f"factor shapes for {name!r} do not match rank {adapter.rank}")


class AdaptedDenoiser:
    """Lazy view of net-with-adapter: weights are combined on the fly each forward."""

    def __init__(self, net: DenoiserNet, adapter: LowRankAdapter):
        _check_adapter(net, adapter)
        self.net = net
        self.adapter = adapter

    def __call__(self, z: torch.Tensor, t: float, c: torch.Tensor | None = None) -> torch.Tensor:
        overrides = {}
        params = dict(self.net.named_parameters())
        for name, (a, b) in self.adapter.layers.items():
            w = params[name]
            overrides[name] = w + self.adapter.scale * (b @ a).reshape(w.shape)
        return functional_call(self.net, overrides, (z, t, c))


def apply_adapter(net: DenoiserNet, adapter: LowRankAdapter) -> AdaptedDenoiser:
    return AdaptedDenoiser(net, adapter)


def merge_adapter(net: DenoiserNet, adapter: LowRankAdapter) -> DenoiserNet:
    """Fold the adapter into plain weights on a deep copy of the net."""
    _check_adapter(net, adapter)
    merged = copy.deepcopy(net)
    params = dict(merged.named_parameters())
    with torch.no_grad():
        for name, (a, b) in adapter.layers.items():
            w = params[name]
            w.add_(adapter.scale * (b @ a).reshape(w.shape))
    return merged
