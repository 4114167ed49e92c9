"""Experiment configuration: a single YAML key-value tree with strict validation.

An empty file resolves to the full default experiment (the published optimizer,
loss-weight, rank and scale settings plus desk-scale step counts). Unknown keys
are rejected; the canonical hash is computed over the fully resolved tree so
key order and formatting never change it.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field

import yaml

from .degradation import DegradationSpec
from .errors import ParseError, ValidationError
from .imaging import PatchSpec
from .losses import LossWeights, PercepExtractor
from .nets import IdentityCodec, LearnedCodec
from .training import NetSpec, TrainConfig

_TRAIN_DEFAULT = {
    "lr": 5e-5,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "weight_decay": 0.0,
    "batch_size": 1,
    "use_adapter": False,
    "adapter_rank": 4,
}

DEFAULTS: dict = {
    "degradation": {
        "blur_sigma_range": [0.4, 1.6],
        "kernel_size": 9,
        "scale": 4,
        "noise_sigma_range": [0.0, 0.04],
        "seed": 0,
    },
    "patch": {"size": 32, "stride": 32, "seed": 0},
    "net": {"width": 16, "depth": 2, "t_embed_dim": 16, "cond_dim": 4},
    "codec": {"kind": "identity", "spatial_factor": 2, "seed": 0},
    "loss": {
        "lambda_l2": 1.0,
        "lambda_lp": 2.0,
        "lambda_fl": 2.0,
        "lambda_rn": 1.0,
        "gamma_time": 5.5,
    },
    "percep": {"seed": 101, "channels": [6, 8, 10]},
    "teachers": {"realness_percep_weight": 6.0, "eps_weight": 1.0},
    "train": {
        "teacher_f": {**_TRAIN_DEFAULT, "steps": 1500, "seed": 10},
        "teacher_r": {**_TRAIN_DEFAULT, "steps": 1500, "seed": 11},
        "stage1": {**_TRAIN_DEFAULT, "steps": 2000, "seed": 12},
        "stage2": {**_TRAIN_DEFAULT, "steps": 5000, "seed": 13},
    },
    "t_grid": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
    "alpha_grid": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
    "data": {
        "corpus_dir": "corpus",
        "eval_corpus_dir": "",
        "n_train_pairs": 24,
        "n_eval_pairs": 12,
        "eval_patch_seed": 9099,
        "eval_degradation_seed": 7077,
    },
    "output_dir": "runs",
}


@dataclass(frozen=True)
class DataSpec:
    corpus_dir: str
    eval_corpus_dir: str
    n_train_pairs: int
    n_eval_pairs: int
    eval_patch_seed: int
    eval_degradation_seed: int


@dataclass(frozen=True)
class ExperimentConfig:
    degradation: DegradationSpec
    patch: PatchSpec
    net: NetSpec
    codec_kind: str
    codec_spatial_factor: int
    codec_seed: int
    loss: LossWeights
    percep_seed: int
    percep_channels: tuple[int, ...]
    realness_percep_weight: float
    teacher_eps_weight: float
    train: dict[str, TrainConfig]
    t_grid: tuple[float, ...]
    alpha_grid: tuple[float, ...]
    data: DataSpec
    output_dir: str
    resolved: dict = field(repr=False, default_factory=dict)
    hash: str = ""

    def make_codec(self):
        if self.codec_kind == "identity":
            return IdentityCodec()
        return LearnedCodec(spatial_factor=self.codec_spatial_factor, seed=self.codec_seed)

    def make_percep(self) -> PercepExtractor:
        return PercepExtractor(seed=self.percep_seed, channels=self.percep_channels)


def _merge(defaults: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ValidationError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f"{path + key!r} must be a mapping")
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def canonical_hash(tree: dict) -> str:
    blob = json.dumps(tree, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def resolve_config(user_tree: dict | None) -> ExperimentConfig:
    tree = _merge(DEFAULTS, user_tree or {}, "")
    try:
        degr = DegradationSpec(
            blur_sigma_range=tuple(tree["degradation"]["blur_sigma_range"]),
            kernel_size=int(tree["degradation"]["kernel_size"]),
            scale=int(tree["degradation"]["scale"]),
            noise_sigma_range=tuple(tree["degradation"]["noise_sigma_range"]),
            seed=int(tree["degradation"]["seed"]),
        )
        patch = PatchSpec(**{k: int(v) for k, v in tree["patch"].items()})
        net = NetSpec(**{k: int(v) for k, v in tree["net"].items()})
        loss = LossWeights(**{k: float(v) for k, v in tree["loss"].items()})
        if tree["codec"]["kind"] not in ("identity", "learned"):
            raise ValueError(f"codec kind must be identity or learned, got {tree['codec']['kind']!r}")
        train = {}
        for stage, sub in tree["train"].items():
            train[stage] = TrainConfig(
                lr=float(sub["lr"]),
                beta1=float(sub["beta1"]),
                beta2=float(sub["beta2"]),
                eps=float(sub["eps"]),
                weight_decay=float(sub["weight_decay"]),
                steps=int(sub["steps"]),
                batch_size=int(sub["batch_size"]),
                seed=int(sub["seed"]),
                stage=stage,
                use_adapter=bool(sub["use_adapter"]),
                adapter_rank=int(sub["adapter_rank"]),
            )
        for name in ("t_grid", "alpha_grid"):
            for v in tree[name]:
                if not (0.0 <= float(v) <= 1.0):
                    raise ValueError(f"{name} values must lie in [0,1], got {v}")
        data = DataSpec(
            corpus_dir=str(tree["data"]["corpus_dir"]),
            eval_corpus_dir=str(tree["data"]["eval_corpus_dir"]),
            n_train_pairs=int(tree["data"]["n_train_pairs"]),
            n_eval_pairs=int(tree["data"]["n_eval_pairs"]),
            eval_patch_seed=int(tree["data"]["eval_patch_seed"]),
            eval_degradation_seed=int(tree["data"]["eval_degradation_seed"]),
        )
        if patch.size % degr.scale:
            raise ValueError(f"patch size {patch.size} not divisible by scale {degr.scale}")
    except (ValueError, TypeError) as err:
        raise ValidationError(str(err)) from err
    return ExperimentConfig(
        degradation=degr,
        patch=patch,
        net=net,
        codec_kind=tree["codec"]["kind"],
        codec_spatial_factor=int(tree["codec"]["spatial_factor"]),
        codec_seed=int(tree["codec"]["seed"]),
        loss=loss,
        percep_seed=int(tree["percep"]["seed"]),
        percep_channels=tuple(int(c) for c in tree["percep"]["channels"]),
        realness_percep_weight=float(tree["teachers"]["realness_percep_weight"]),
        teacher_eps_weight=float(tree["teachers"]["eps_weight"]),
        train=train,
        t_grid=tuple(float(v) for v in tree["t_grid"]),
        alpha_grid=tuple(float(v) for v in tree["alpha_grid"]),
        data=data,
        output_dir=str(tree["output_dir"]),
        resolved=tree,
        hash=canonical_hash(tree),
    )


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    """Load, validate, and default-fill a YAML experiment config."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ParseError(f"cannot read config {os.fspath(path)!r}: {err}") from err
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"invalid YAML{where}: {err}") from err
    if tree is None:
        tree = {}
    if not isinstance(tree, dict):
        raise ParseError("config root must be a mapping")
    return resolve_config(tree)
