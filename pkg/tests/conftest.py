"""Shared fixtures: the toy acceptance pipeline trained once per session."""

import dataclasses
from types import SimpleNamespace

import pytest
import torch

from tunesr.config import resolve_config
from tunesr.losses import LossWeights
from tunesr.pipeline import (
    bicubic_outputs,
    distill_stage1,
    distill_stage2,
    make_datasets,
    restorer_outputs,
    train_teacher,
)
from tunesr.toydata import make_toy_corpus

# One place to tune the toy acceptance run. Step counts stay at the desk-scale
# defaults for stage 1 (2000) while the rest is sized so the whole pipeline
# trains in a few CPU-minutes.
ACCEPTANCE_CONFIG = {
    "degradation": {
        "blur_sigma_range": [0.7, 1.5],
        "kernel_size": 11,
        "scale": 4,
        "noise_sigma_range": [0.02, 0.07],
        "seed": 3,
    },
    "patch": {"size": 32, "stride": 32, "seed": 4},
    "net": {"width": 24, "depth": 2, "t_embed_dim": 16, "cond_dim": 4},
    "percep": {"seed": 101, "channels": [6, 8, 10]},
    "teachers": {"realness_percep_weight": 8.0, "eps_weight": 0.05},
    "train": {
        "teacher_f": {"steps": 1500, "lr": 2e-3, "batch_size": 4, "seed": 10},
        "teacher_r": {"steps": 2000, "lr": 2e-3, "batch_size": 4, "seed": 11},
        "stage1": {"steps": 2000, "lr": 3e-4, "batch_size": 2, "seed": 12},
        "stage2": {"steps": 1500, "lr": 1e-3, "batch_size": 4, "seed": 13},
    },
    "data": {"n_train_pairs": 48, "n_eval_pairs": 10},
}


def make_acceptance_config(tmp_root):
    train_dir = tmp_root / "corpus_train"
    eval_dir = tmp_root / "corpus_eval"
    if not train_dir.exists():
        make_toy_corpus(train_dir, 16, 96, seed=5)
        make_toy_corpus(eval_dir, 6, 96, seed=77)
    tree = dict(ACCEPTANCE_CONFIG)
    tree["data"] = {
        **ACCEPTANCE_CONFIG["data"],
        "corpus_dir": str(train_dir),
        "eval_corpus_dir": str(eval_dir),
    }
    return resolve_config(tree)


@pytest.fixture(scope="session")
def acceptance_bundle(tmp_path_factory):
    """Teachers, stage-1 student (+ no-distill ablation), stage-2 flow, datasets."""
    torch.set_num_threads(max(torch.get_num_threads(), 2))
    root = tmp_path_factory.mktemp("acceptance")
    cfg = make_acceptance_config(root)
    train, heldout = make_datasets(cfg)
    teacher_f, _ = train_teacher(cfg, "fidelity", train)
    teacher_r, _ = train_teacher(cfg, "realness", train)
    student, _ = distill_stage1(cfg, teacher_f, teacher_r, train)

    ablation_cfg = dataclasses.replace(
        cfg, loss=LossWeights(lambda_fl=0.0, lambda_rn=0.0, gamma_time=cfg.loss.gamma_time)
    )
    ablation, _ = distill_stage1(ablation_cfg, teacher_f, teacher_r, train)

    flow, _ = distill_stage2(cfg, student, train)

    codec = cfg.make_codec()
    ex = cfg.make_percep()
    scale = cfg.degradation.scale
    return SimpleNamespace(
        cfg=cfg,
        root=root,
        train=train,
        heldout=heldout,
        teacher_f=teacher_f,
        teacher_r=teacher_r,
        student=student,
        ablation=ablation,
        flow=flow,
        codec=codec,
        ex=ex,
        scale=scale,
        outputs={
            "teacher_f": restorer_outputs(teacher_f, codec, heldout, scale),
            "teacher_r": restorer_outputs(teacher_r, codec, heldout, scale),
            "student": restorer_outputs(student, codec, heldout, scale),
            "ablation": restorer_outputs(ablation, codec, heldout, scale),
            "bicubic": bicubic_outputs(heldout, scale),
        },
    )
