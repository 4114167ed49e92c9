"""Training objectives: reconstruction, dual-teacher distillation, and the control loss.

Teachers are frozen by their parameters carrying requires_grad=False; nothing here
detaches teacher outputs, so gradients reach the student through every input path,
including the student-dependence of the noised latents fed to a teacher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .diffusion import add_noise, restore_latent, sample_timestep, sample_timestep_pair
from .errors import ReversedInterval, ShapeMismatch


@dataclass(frozen=True)
class LossWeights:
    lambda_l2: float = 1.0
    lambda_lp: float = 2.0
    lambda_fl: float = 2.0
    lambda_rn: float = 1.0
    gamma_time: float = 5.5

    def __post_init__(self):
        for name in ("lambda_l2", "lambda_lp", "lambda_fl", "lambda_rn", "gamma_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


class PercepExtractor:
    """Fixed seeded random conv pyramid; a deterministic stand-in for a learned
    perceptual feature stack. Filters are zero-mean so responses track structure
    rather than brightness; weights are frozen at construction."""

    def __init__(self, seed: int = 0, channels: tuple[int, ...] = (6, 8, 10), in_channels: int = 3):
        g = torch.Generator().manual_seed(seed)
        self.in_channels = in_channels
        self.channels = tuple(channels)
        self.weights: list[torch.Tensor] = []
        c_prev = in_channels
        for c_out in self.channels:
            w = torch.randn((c_out, c_prev, 3, 3), generator=g, dtype=torch.float64)
            w = w - w.mean(dim=(1, 2, 3), keepdim=True)
            w = w / math.sqrt(c_prev * 9)
            w.requires_grad_(False)
            self.weights.append(w)
            c_prev = c_out

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.shape[0] == 1 and self.in_channels == 3:
            x = x.expand(3, -1, -1)
        if x.shape[0] != self.in_channels:
            raise ShapeMismatch(f"extractor expects {self.in_channels} channels, got {x.shape[0]}")
        h = x.unsqueeze(0)
        feats = []
        for i, w in enumerate(self.weights):
            if i > 0:
                h = F.avg_pool2d(h, 2)
            # smooth activation keeps the induced training losses kink-free
            h = F.silu(F.conv2d(h, w.to(h.dtype), padding=1))
            feats.append(h.squeeze(0))
        return feats


def _unit_normalize(f: torch.Tensor) -> torch.Tensor:
    norm = torch.sqrt((f * f).sum(dim=0, keepdim=True) + 1e-10)
    return f / norm


def percep_dist(ex: PercepExtractor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean squared distance of unit-normalized pyramid features; symmetric, zero iff equal."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"{tuple(a.shape)} vs {tuple(b.shape)}")
    fa = ex.features(a)
    fb = ex.features(b)
    total = 0.0
    for la, lb in zip(fa, fb):
        total = total + ((_unit_normalize(la) - _unit_normalize(lb)) ** 2).mean()
    return total / len(fa)


def rec_loss(x0: torch.Tensor, x_gt: torch.Tensor, w: LossWeights, ex: PercepExtractor) -> torch.Tensor:
    """lambda_l2 * MSE + lambda_lp * perceptual distance."""
    if x0.shape != x_gt.shape:
        raise ShapeMismatch(f"{tuple(x0.shape)} vs {tuple(x_gt.shape)}")
    loss = w.lambda_l2 * ((x0 - x_gt) ** 2).mean()
    if w.lambda_lp > 0:
        loss = loss + w.lambda_lp * percep_dist(ex, x0, x_gt)
    return loss


def distill_loss(
    teacher,
    student,
    z_t: torch.Tensor,
    z_t_s: torch.Tensor,
    t: float,
    c: torch.Tensor | None,
    gamma_time: float,
) -> torch.Tensor:
    """Two-term teacher alignment.

    The first term matches the student's noise prediction to the teacher's on the
    noised student output; the second compares the teacher's predictions on the
    noised student output vs the noised ground truth, which trains the student
    only through the dependence of z_t_s on its restoration. One code path
    serves both the fidelity and the realness teacher.
    """
    if z_t.shape != z_t_s.shape:
        raise ShapeMismatch(f"{tuple(z_t.shape)} vs {tuple(z_t_s.shape)}")
    teacher_on_student = teacher(z_t_s, t, c)
    term1 = ((teacher_on_student - student(z_t_s, t, c)) ** 2).mean()
    if gamma_time == 0:
        return term1
    term2 = ((teacher_on_student - teacher(z_t, t, c)) ** 2).mean()
    return term1 + gamma_time * term2


def stage1_loss(
    batch: list[tuple[torch.Tensor, torch.Tensor]],
    student,
    teacher_f,
    teacher_r,
    codec,
    w: LossWeights,
    ex: PercepExtractor,
    rng: torch.Generator,
    c: torch.Tensor | None = None,
    scale: int = 4,
) -> torch.Tensor:
    """Full first-stage objective over a batch of (x_LR, x_GT) pairs.

    Per item: encode both sides, draw one (t, eps), noise the ground-truth and
    the student-restored latents with the same draw, then combine reconstruction
    and the two distillation terms.
    """
    from .diffusion import student_restore

    total = 0.0
    for x_lr, x_gt in batch:
        z0 = codec.encode(x_gt)
        t = sample_timestep(rng)
        eps = torch.randn(z0.shape, generator=rng, dtype=torch.float64).to(z0.dtype)
        z_t = add_noise(z0, t, eps)
        z0_s, x0 = student_restore(student, codec, x_lr, scale=scale, c=c)
        z_t_s = add_noise(z0_s, t, eps)
        item = rec_loss(x0, x_gt, w, ex)
        if w.lambda_fl > 0:
            item = item + w.lambda_fl * distill_loss(teacher_f, student, z_t, z_t_s, t, c, w.gamma_time)
        if w.lambda_rn > 0:
            item = item + w.lambda_rn * distill_loss(teacher_r, student, z_t, z_t_s, t, c, w.gamma_time)
        total = total + item
    return total / len(batch)


def control_loss(
    teacher_s,
    student,
    z0: torch.Tensor,
    t: float,
    t_prime: float,
    c: torch.Tensor | None = None,
    variant: str = "main",
) -> torch.Tensor:
    """Flow-consistency loss tying the student field to teacher evaluations.

    "main" evaluates the teacher at the anchor latent for both timesteps;
    "endpoint" reproduces the alternative that noises to z_t / z_t' with a
    t'-scaled second step and evaluates the teacher there. The two agree only
    in degenerate cases and "main" is the one trained against.
    """
    t, t_prime = float(t), float(t_prime)
    if not (0.0 < t < t_prime < 1.0):
        raise ReversedInterval(f"need 0 < t < t' < 1, got t={t}, t'={t_prime}")
    dt = t_prime - t
    if variant == "main":
        f_t = teacher_s(z0, t, c)
        f_tp = teacher_s(z0, t_prime, c)
        z_t = z0 + t * f_t
        resid = t * f_t - t_prime * f_tp + dt * student(z_t, t, c)
    elif variant == "endpoint":
        f_anchor = teacher_s(z0, t, c)
        z_t = z0 + t * f_anchor
        z_tp = z_t + t_prime * f_anchor
        resid = t * teacher_s(z_t, t, c) - t_prime * teacher_s(z_tp, t_prime, c) + dt * student(z_t, t, c)
    else:
        raise ValueError(f"unknown control-loss variant {variant!r}")
    return (resid**2).mean()


def stage2_loss(
    batch_z0: list[torch.Tensor],
    teacher_s,
    student,
    rng: torch.Generator,
    c: torch.Tensor | None = None,
    variant: str = "main",
) -> torch.Tensor:
    """Mean control loss over per-item sampled (t, t') pairs; deterministic given rng."""
    total = 0.0
    for z0 in batch_z0:
        t, t_prime = sample_timestep_pair(rng)
        total = total + control_loss(teacher_s, student, z0, t, t_prime, c, variant=variant)
    return total / len(batch_z0)


def loss_and_grads(loss: torch.Tensor, params: dict[str, torch.Tensor]) -> tuple[float, dict[str, torch.Tensor]]:
    """Evaluate a scalar loss tensor into (value, named gradients) for the given params."""
    names = list(params)
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    out = {}
    for name, g in zip(names, grads):
        out[name] = torch.zeros_like(params[name]) if g is None else g
    return float(loss), out
