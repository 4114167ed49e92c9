"""Teacher pretraining, the two distillation stages, and the optimizer contract.

Teachers here are trained by this repository instead of imported: a single
timestep-conditioned net per teacher serves both as restorer (residual-skip
evaluation at t=1) and as noise predictor (direct evaluation at sampled t).
The fidelity teacher optimizes pure MSE restoration, the realness teacher adds
a strong perceptual weight, which reproduces the fidelity/realness polarity the
distillation stages assume.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import math
import time
from dataclasses import dataclass, field, replace

import torch

from .diffusion import sample_timestep, student_restore
from .errors import EmptyData, NonFiniteGradient, NonFiniteLoss
from .losses import LossWeights, PercepExtractor, percep_dist, stage1_loss, stage2_loss
from .nets import (
    AdaptedDenoiser,
    DenoiserNet,
    LowRankAdapter,
    apply_adapter,
    default_conditioning,
    init_adapter,
    init_denoiser,
    merge_adapter,
)


@dataclass(frozen=True)
class NetSpec:
    width: int = 16
    depth: int = 2
    t_embed_dim: int = 16
    cond_dim: int = 4

    def build(self, seed: int, in_channels: int = 3) -> DenoiserNet:
        return init_denoiser(
            seed, self.width, self.depth, self.t_embed_dim, in_channels=in_channels, cond_dim=self.cond_dim
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    steps: int = 2000
    batch_size: int = 1
    seed: int = 0
    stage: str = "stage1"  # teacher_f | teacher_r | stage1 | stage2
    use_adapter: bool = False
    adapter_rank: int = 4

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.stage not in ("teacher_f", "teacher_r", "stage1", "stage2"):
            raise ValueError(f"unknown stage {self.stage!r}")


@dataclass
class RunLog:
    stage: str
    seed: int
    config_hash: str = ""
    entries: list[tuple[int, float, float]] = field(default_factory=list)  # step, loss, wall_ms

    def append(self, step: int, loss: float, wall_ms: float):
        if self.entries and step <= self.entries[-1][0]:
            raise ValueError("step index must be strictly increasing")
        self.entries.append((step, loss, wall_ms))

    def losses(self) -> list[float]:
        return [e[1] for e in self.entries]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "wall_ms"])
            for step, loss, wall in self.entries:
                writer.writerow([step, repr(loss), f"{wall:.3f}"])


# ---------------------------------------------------------------------------
# optimizer


def init_opt_state(params: dict[str, torch.Tensor]) -> dict:
    return {
        "step": 0,
        "m": {k: torch.zeros_like(v) for k, v in params.items()},
        "v": {k: torch.zeros_like(v) for k, v in params.items()},
    }


def optimizer_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: dict,
    cfg: TrainConfig,
) -> tuple[dict[str, torch.Tensor], dict]:
    """Decoupled-weight-decay adaptive moment update with bias correction.

    Mutates params in place (under no_grad) and the state dict. A non-finite
    gradient aborts before any tensor is touched.
    """
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient in {name!r}")
    state["step"] += 1
    k = state["step"]
    bc1 = 1.0 - cfg.beta1**k
    bc2 = 1.0 - cfg.beta2**k
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m = state["m"][name]
            v = state["v"][name]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            if cfg.weight_decay:
                p.mul_(1.0 - cfg.lr * cfg.weight_decay)
            denom = (v / bc2).sqrt_().add_(cfg.eps)
            p.addcdiv_(m / bc1, denom, value=-cfg.lr)
    return params, state


def trainable_params(model) -> dict[str, torch.Tensor]:
    """Name->tensor map of what a trainer updates, in deterministic order."""
    if isinstance(model, AdaptedDenoiser):
        out = {}
        for layer, (a, b) in sorted(model.adapter.layers.items()):
            out[f"{layer}.lora_a"] = a
            out[f"{layer}.lora_b"] = b
        return out
    return dict(sorted(model.named_parameters()))


def param_fingerprint(net: torch.nn.Module) -> str:
    """SHA-256 over the raw little-endian bytes of all parameters, in name order."""
    h = hashlib.sha256()
    for name, p in sorted(net.named_parameters()):
        h.update(name.encode())
        h.update(p.detach().to(torch.float64).numpy().tobytes())
    return h.hexdigest()


def freeze(net: torch.nn.Module) -> torch.nn.Module:
    for p in net.parameters():
        p.requires_grad_(False)
    return net


def _grads_for(loss: torch.Tensor, params: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    names = list(params)
    gs = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    return {n: (torch.zeros_like(params[n]) if g is None else g) for n, g in zip(names, gs)}


def _pick_batch(data: list, batch_size: int, rng: torch.Generator) -> list:
    idx = torch.randint(len(data), (batch_size,), generator=rng)
    return [data[int(i)] for i in idx]


# ---------------------------------------------------------------------------
# teacher pretraining


def pretrain_teacher(
    data: list[tuple[torch.Tensor, torch.Tensor]],
    cfg: TrainConfig,
    codec,
    netspec: NetSpec,
    ex: PercepExtractor,
    percep_weight: float,
    eps_weight: float = 1.0,
    eps_start_frac: float = 0.5,
    scale: int = 4,
    fixed_draws: bool = False,
) -> tuple[DenoiserNet, RunLog]:
    """Two-phase pretraining of one net carrying both teacher roles.

    The first phase trains only the restorer objective; once the output
    distribution has settled, the noise-prediction loss on the net's own
    (detached) restored latents joins in, with the restoration loss retained so
    the restorer does not drift.
    """
    if not data:
        raise EmptyData("need at least one training pair")
    net = netspec.build(cfg.seed, in_channels=codec.latent_channels)
    for p in net.parameters():
        p.requires_grad_(True)
    params = trainable_params(net)
    state = init_opt_state(params)
    rng = torch.Generator().manual_seed(cfg.seed + 1)
    c = default_conditioning(netspec.cond_dim)
    log = RunLog(stage=cfg.stage, seed=cfg.seed)
    eps_start = int(cfg.steps * eps_start_frac)
    for step in range(cfg.steps):
        t0 = time.perf_counter()
        batch = _pick_batch(data, cfg.batch_size, rng)
        loss_rng = torch.Generator().manual_seed(cfg.seed + 5) if fixed_draws else rng
        loss = 0.0
        for x_lr, x_gt in batch:
            z0_hat, x0 = student_restore(net, codec, x_lr, scale=scale, c=c)
            item = ((x0 - x_gt) ** 2).mean()
            if percep_weight > 0:
                item = item + percep_weight * percep_dist(ex, x0, x_gt)
            if eps_weight > 0 and step >= eps_start:
                t = sample_timestep(loss_rng)
                eps = torch.randn(z0_hat.shape, generator=loss_rng, dtype=torch.float64).to(z0_hat.dtype)
                z_t = z0_hat.detach() + t * eps
                item = item + eps_weight * ((net(z_t, t, c) - eps) ** 2).mean()
            loss = loss + item
        loss = loss / len(batch)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"{cfg.stage} step {step}: loss={float(loss)}")
        optimizer_step(params, _grads_for(loss, params), state, cfg)
        log.append(step + 1, float(loss.detach()), (time.perf_counter() - t0) * 1e3)
    return net, log


def pretrain_fidelity_teacher(
    data, cfg: TrainConfig, codec, netspec: NetSpec, ex: PercepExtractor, scale: int = 4, **kw
) -> tuple[DenoiserNet, RunLog]:
    cfg = replace(cfg, stage="teacher_f")
    return pretrain_teacher(data, cfg, codec, netspec, ex, percep_weight=0.0, scale=scale, **kw)


def pretrain_realness_teacher(
    data,
    cfg: TrainConfig,
    codec,
    netspec: NetSpec,
    ex: PercepExtractor,
    percep_weight: float = 6.0,
    scale: int = 4,
    **kw,
) -> tuple[DenoiserNet, RunLog]:
    cfg = replace(cfg, stage="teacher_r")
    return pretrain_teacher(data, cfg, codec, netspec, ex, percep_weight=percep_weight, scale=scale, **kw)


# ---------------------------------------------------------------------------
# stage 1: dual-teacher distillation


def run_stage1(
    data: list[tuple[torch.Tensor, torch.Tensor]],
    teacher_f: DenoiserNet,
    teacher_r: DenoiserNet,
    cfg: TrainConfig,
    w: LossWeights,
    codec,
    ex: PercepExtractor,
    scale: int = 4,
    fixed_draws: bool = False,
) -> tuple[DenoiserNet, RunLog]:
    """Distill both teachers into a student initialized from the realness teacher.

    fixed_draws freezes the per-step (t, eps) sampling to the same values every
    step, turning the objective deterministic for overfit-one-batch smoke runs.
    """
    if not data:
        raise EmptyData("need at least one training pair")
    freeze(teacher_f)
    freeze(teacher_r)
    student = copy.deepcopy(teacher_r)
    for p in student.parameters():
        p.requires_grad_(True)
    if cfg.use_adapter:
        freeze(student)
        adapter = init_adapter(student, rank=cfg.adapter_rank, seed=cfg.seed + 7)
        for p in adapter.parameters():
            p.requires_grad_(True)
        model = apply_adapter(student, adapter)
    else:
        adapter = None
        model = student
    params = trainable_params(model)
    state = init_opt_state(params)
    rng = torch.Generator().manual_seed(cfg.seed + 2)
    c = default_conditioning(student.cond_dim)
    log = RunLog(stage="stage1", seed=cfg.seed)
    for step in range(cfg.steps):
        t0 = time.perf_counter()
        batch = _pick_batch(data, cfg.batch_size, rng)
        loss_rng = torch.Generator().manual_seed(cfg.seed + 5) if fixed_draws else rng
        loss = stage1_loss(batch, model, teacher_f, teacher_r, codec, w, ex, loss_rng, c=c, scale=scale)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(
                f"stage1 step {step}: loss={float(loss)}; recent losses {log.losses()[-5:]}"
            )
        optimizer_step(params, _grads_for(loss, params), state, cfg)
        log.append(step + 1, float(loss.detach()), (time.perf_counter() - t0) * 1e3)
    if adapter is not None:
        student = merge_adapter(student, adapter)
    return student, log


# ---------------------------------------------------------------------------
# stage 2: controllability distillation


def run_stage2(
    stage1_student: DenoiserNet,
    data: list[tuple[torch.Tensor, torch.Tensor]],
    cfg: TrainConfig,
    codec,
    scale: int = 4,
    teacher_field=None,
    variant: str = "main",
    fixed_draws: bool = False,
) -> tuple[DenoiserNet, RunLog]:
    """Distill the frozen stage-1 student into a timestep-controllable flow.

    The training pool is the stage-1 restorations of the training LR images.
    teacher_field overrides the frozen teacher with an arbitrary field callable,
    which is how the analytically solvable constant-field case is exercised.
    fixed_draws freezes the per-step (t, t') sampling for smoke diagnostics.
    """
    if not data:
        raise EmptyData("need at least one training pair")
    teacher_s = freeze(copy.deepcopy(stage1_student))
    student = copy.deepcopy(stage1_student)
    for p in student.parameters():
        p.requires_grad_(True)
    if cfg.use_adapter:
        freeze(student)
        adapter = init_adapter(student, rank=cfg.adapter_rank, seed=cfg.seed + 7)
        for p in adapter.parameters():
            p.requires_grad_(True)
        model = apply_adapter(student, adapter)
    else:
        adapter = None
        model = student
    c = default_conditioning(stage1_student.cond_dim)
    with torch.no_grad():
        pool = [student_restore(teacher_s, codec, x_lr, scale=scale, c=c)[0] for x_lr, _ in data]
    field_fn = teacher_field if teacher_field is not None else teacher_s
    params = trainable_params(model)
    state = init_opt_state(params)
    rng = torch.Generator().manual_seed(cfg.seed + 3)
    log = RunLog(stage="stage2", seed=cfg.seed)
    for step in range(cfg.steps):
        t0 = time.perf_counter()
        batch = _pick_batch(pool, cfg.batch_size, rng)
        loss_rng = torch.Generator().manual_seed(cfg.seed + 5) if fixed_draws else rng
        loss = stage2_loss(batch, field_fn, model, loss_rng, c=c, variant=variant)
        if not torch.isfinite(loss):
            raise NonFiniteLoss(
                f"stage2 step {step}: loss={float(loss)}; recent losses {log.losses()[-5:]}"
            )
        optimizer_step(params, _grads_for(loss, params), state, cfg)
        log.append(step + 1, float(loss.detach()), (time.perf_counter() - t0) * 1e3)
    if adapter is not None:
        student = merge_adapter(student, adapter)
    return student, log
