"""Affine noise flow, the one-step restorer, timestep sampling, and the knob path.

The noising process is the exact affine map z_t = z_0 + t * eps. The same map,
read with a learned field in place of eps, is what the controllability stage
distills, so holding one parametrization end to end keeps every epsilon-space
in the pipeline commensurable.
"""

from __future__ import annotations

import torch

from .errors import ReversedInterval, ShapeMismatch
from .imaging import resize_bicubic
from .nets import Codec, default_conditioning

RESTORE_T = 1.0  # timestep label under which the restorer view of a net is queried


def add_noise(z0: torch.Tensor, t: float, eps: torch.Tensor) -> torch.Tensor:
    """z_t = z_0 + t * eps."""
    if z0.shape != eps.shape:
        raise ShapeMismatch(f"{tuple(z0.shape)} vs {tuple(eps.shape)}")
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"timestep must lie in [0,1], got {t}")
    return z0 + t * eps


def step_noise(z_t: torch.Tensor, t: float, t_prime: float, eps: torch.Tensor) -> torch.Tensor:
    """z_t' = z_t + (t' - t) * eps; composes exactly with add_noise."""
    if z_t.shape != eps.shape:
        raise ShapeMismatch(f"{tuple(z_t.shape)} vs {tuple(eps.shape)}")
    if t_prime < t:
        raise ReversedInterval(f"t'={t_prime} < t={t}")
    return z_t + (float(t_prime) - float(t)) * eps


def step_noise_endpoint_scaled(z_t: torch.Tensor, t: float, t_prime: float, eps: torch.Tensor) -> torch.Tensor:
    """Variant that multiplies by t' instead of (t' - t).

    Kept only so tests can document that it breaks the composition law whenever
    t > 0; no training or inference path uses it.
    """
    if t_prime < t:
        raise ReversedInterval(f"t'={t_prime} < t={t}")
    return z_t + float(t_prime) * eps


def sample_timestep(rng: torch.Generator) -> float:
    """t ~ Uniform(0,1)."""
    return float(torch.rand(1, generator=rng, dtype=torch.float64))


def sample_timestep_pair(rng: torch.Generator) -> tuple[float, float]:
    """(t, t') uniform on the triangle 0 < t < t' < 1, by sorting two uniforms."""
    u = torch.rand(2, generator=rng, dtype=torch.float64)
    a, b = float(u.min()), float(u.max())
    return a, b


def restore_latent(model, z1: torch.Tensor, c: torch.Tensor | None = None) -> torch.Tensor:
    """Residual-skip one-step restoration: z0 = z1 + net(z1, RESTORE_T, c)."""
    return z1 + model(z1, RESTORE_T, c)


def student_restore(
    student,
    codec: Codec,
    x_lr: torch.Tensor,
    scale: int = 4,
    c: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Upscale the LR input bicubically, encode, restore in one evaluation, decode.

    Returns (z0_s, x0). With a zero-initialized head the restoration is the
    identity on latents, so x0 is exactly the clamped bicubic upscale.
    """
    x_up = resize_bicubic(x_lr, float(scale)) if scale != 1 else x_lr
    z1 = codec.encode(x_up)
    z0_s = restore_latent(student, z1, c)
    x0 = codec.decode(z0_s)
    return z0_s, x0


def sr_at_t(
    stage2_student,
    stage1_student,
    codec: Codec,
    x_lr: torch.Tensor,
    t_knob: float,
    c: torch.Tensor | None = None,
    scale: int = 4,
    euler_steps: int = 1,
) -> torch.Tensor:
    """Controllable inference: one Euler step of the learned flow away from the t=0 output.

    t_knob = 0 returns the stage-1 restoration bitwise. euler_steps > 1 subdivides
    the same interval for study; the default single step matches one-step inference.
    """
    t_knob = float(t_knob)
    if not (0.0 <= t_knob <= 1.0):
        raise ValueError(f"t_knob must lie in [0,1], got {t_knob}")
    if c is None and hasattr(stage1_student, "cond_dim"):
        c = default_conditioning(stage1_student.cond_dim)
    z0, _ = student_restore(stage1_student, codec, x_lr, scale=scale, c=c)
    z = z0
    if t_knob > 0.0:
        if euler_steps == 1:
            z = z0 + t_knob * stage2_student(z0, 0.0, c)
        else:
            dt = t_knob / euler_steps
            for k in range(euler_steps):
                z = z + dt * stage2_student(z, k * dt, c)
    return codec.decode(z)
