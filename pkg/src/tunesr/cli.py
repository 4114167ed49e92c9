"""Command-line entry points tying the stages together.

Every run-producing subcommand accepts --config/--seed/--out, honors the same
defaulted experiment config, and drops a manifest (config hash, seeds, code
version) beside its outputs.
"""

from __future__ import annotations

import argparse
import copy
import sys
from pathlib import Path

from .checkpoint import load_model_checkpoint, save_model_checkpoint
from .config import ExperimentConfig, parse_config, resolve_config
from .errors import TunesrError
from .evaluation import sweep_alpha, sweep_t
from .imaging import save_png
from .pipeline import (
    REFERENCE_TREND_ALPHA,
    REFERENCE_TREND_T,
    bicubic_outputs,
    distill_stage1,
    distill_stage2,
    evaluate_outputs,
    make_datasets,
    restorer_outputs,
    train_teacher,
    write_manifest,
    write_metric_csv,
    write_reference_report,
)
from .toydata import make_toy_corpus


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else resolve_config({})
    tree = copy.deepcopy(cfg.resolved)
    stage = getattr(args, "_stage", None)
    if getattr(args, "steps", None) is not None and stage:
        tree["train"][stage]["steps"] = args.steps
    if args.seed is not None:
        if stage:
            tree["train"][stage]["seed"] = args.seed
        else:
            tree["degradation"]["seed"] = args.seed
    return resolve_config(tree)


def _seeds(cfg: ExperimentConfig) -> dict[str, int]:
    out = {stage: tc.seed for stage, tc in cfg.train.items()}
    out["degradation"] = cfg.degradation.seed
    return out


def cmd_synth_data(args) -> int:
    cfg = _load_config(args)
    if args.generate_corpus:
        make_toy_corpus(cfg.data.corpus_dir, args.generate_corpus, args.corpus_size, cfg.degradation.seed)
        eval_dir = cfg.data.eval_corpus_dir
        if eval_dir and not Path(eval_dir).exists():
            make_toy_corpus(eval_dir, max(args.generate_corpus // 2, 4), args.corpus_size, cfg.degradation.seed + 1)
    train, heldout = make_datasets(cfg)
    out = Path(args.out)
    for split, pairs in (("train", train), ("heldout", heldout)):
        d = out / split
        d.mkdir(parents=True, exist_ok=True)
        for i, (x_lr, x_gt) in enumerate(pairs):
            save_png(x_lr, d / f"lr_{i:04d}.png")
            save_png(x_gt, d / f"gt_{i:04d}.png")
    write_manifest(args.out, cfg, sys.argv[1:], _seeds(cfg))
    print(f"wrote {len(train)} train and {len(heldout)} heldout pairs to {out}")
    return 0


def cmd_train_teacher(args) -> int:
    args._stage = "teacher_f" if args.role == "fidelity" else "teacher_r"
    cfg = _load_config(args)
    train, _ = make_datasets(cfg)
    net, log = train_teacher(cfg, args.role, train)
    save_model_checkpoint(
        args.out,
        stage=args._stage,
        nets={"restorer": net},
        config_hash=cfg.hash,
        step=len(log.entries),
        seed=cfg.train[args._stage].seed,
        extra=_ckpt_extra(cfg),
    )
    write_manifest(args.out, cfg, sys.argv[1:], _seeds(cfg))
    print(f"teacher[{args.role}] trained for {len(log.entries)} steps -> {args.out}")
    return 0


def _ckpt_extra(cfg: ExperimentConfig) -> dict:
    return {
        "scale": cfg.degradation.scale,
        "percep_seed": cfg.percep_seed,
        "percep_channels": list(cfg.percep_channels),
        "codec_kind": cfg.codec_kind,
    }


def cmd_distill_stage1(args) -> int:
    args._stage = "stage1"
    cfg = _load_config(args)
    train, _ = make_datasets(cfg)
    teacher_f, _ = load_model_checkpoint(args.teacher_f)
    teacher_r, _ = load_model_checkpoint(args.teacher_r)
    student, log = distill_stage1(cfg, teacher_f["restorer"], teacher_r["restorer"], train)
    save_model_checkpoint(
        args.out,
        stage="stage1",
        nets={"restorer": student},
        config_hash=cfg.hash,
        step=len(log.entries),
        seed=cfg.train["stage1"].seed,
        extra=_ckpt_extra(cfg),
    )
    write_manifest(args.out, cfg, sys.argv[1:], _seeds(cfg))
    print(f"stage1 student trained for {len(log.entries)} steps -> {args.out}")
    return 0


def cmd_distill_stage2(args) -> int:
    args._stage = "stage2"
    cfg = _load_config(args)
    train, _ = make_datasets(cfg)
    stage1_nets, _ = load_model_checkpoint(args.stage1)
    stage1 = stage1_nets["restorer"]
    flow, log = distill_stage2(cfg, stage1, train)
    save_model_checkpoint(
        args.out,
        stage="stage2",
        nets={"restorer": stage1, "flow": flow},
        config_hash=cfg.hash,
        step=len(log.entries),
        seed=cfg.train["stage2"].seed,
        extra=_ckpt_extra(cfg),
    )
    write_manifest(args.out, cfg, sys.argv[1:], _seeds(cfg))
    print(f"stage2 flow trained for {len(log.entries)} steps -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    _, heldout = make_datasets(cfg)
    nets, meta = load_model_checkpoint(args.ckpt)
    codec = cfg.make_codec()
    ex = cfg.make_percep()
    scale = cfg.degradation.scale
    rows = [
        evaluate_outputs("model", restorer_outputs(nets["restorer"], codec, heldout, scale), heldout, ex),
        evaluate_outputs("bicubic", bicubic_outputs(heldout, scale), heldout, ex),
    ]
    write_metric_csv(rows, "key", args.out)
    write_manifest(args.out, cfg, sys.argv[1:], _seeds(cfg))
    print(f"eval[{meta['stage']}] -> {args.out}")
    return 0


def cmd_sweep_alpha(args) -> int:
    cfg = _load_config(args)
    _, heldout = make_datasets(cfg)
    nets_f, _ = load_model_checkpoint(args.ckpt_f)
    nets_r, _ = load_model_checkpoint(args.ckpt_r)
    codec = cfg.make_codec()
    ex = cfg.make_percep()
    scale = cfg.degradation.scale
    x_f = restorer_outputs(nets_f["restorer"], codec, heldout, scale)
    x_r = restorer_outputs(nets_r["restorer"], codec, heldout, scale)
    rows = sweep_alpha(x_f, x_r, [gt for _, gt in heldout], cfg.alpha_grid, ex)
    write_metric_csv(rows, "alpha", args.out)
    write_reference_report(rows, "alpha", REFERENCE_TREND_ALPHA, str(args.out) + ".md")
    write_manifest(args.out, cfg, sys.argv[1:], _seeds(cfg))
    print(f"alpha sweep ({len(rows)} rows) -> {args.out}")
    return 0


def cmd_sweep_t(args) -> int:
    cfg = _load_config(args)
    _, heldout = make_datasets(cfg)
    nets, meta = load_model_checkpoint(args.ckpt)
    if "flow" not in nets:
        raise TunesrError(f"checkpoint {args.ckpt!r} has no flow net (stage {meta['stage']!r})")
    codec = cfg.make_codec()
    ex = cfg.make_percep()
    rows = sweep_t(
        nets["flow"],
        nets["restorer"],
        codec,
        [lr for lr, _ in heldout],
        [gt for _, gt in heldout],
        cfg.t_grid,
        ex,
        scale=cfg.degradation.scale,
    )
    write_metric_csv(rows, "t", args.out)
    write_reference_report(rows, "t", REFERENCE_TREND_T, str(args.out) + ".md")
    write_manifest(args.out, cfg, sys.argv[1:], _seeds(cfg))
    print(f"t sweep ({len(rows)} rows) -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_registry, create_app

    registry = build_registry(args.models_dir)
    app = create_app(registry, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tunesr", description="controllable trade-off super-resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", default=None, help="YAML experiment config; omitted = all defaults")
        p.add_argument("--seed", type=int, default=None, help="override the seed of the stage being run")
        if out_required:
            p.add_argument("--out", required=True, help="output path")

    p = sub.add_parser("synth-data", help="materialize LR/GT pairs from the corpus")
    common(p)
    p.add_argument("--generate-corpus", type=int, default=0, metavar="N", help="first write N toy corpus PNGs")
    p.add_argument("--corpus-size", type=int, default=96, help="toy corpus image size")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train-teacher", help="pretrain the fidelity or realness teacher")
    common(p)
    p.add_argument("--role", choices=("fidelity", "realness"), required=True)
    p.add_argument("--steps", type=int, default=None, help="override step count")
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill-stage1", help="dual-teacher distillation")
    common(p)
    p.add_argument("--teacher-f", required=True, help="fidelity teacher checkpoint")
    p.add_argument("--teacher-r", required=True, help="realness teacher checkpoint")
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_distill_stage1, _stage="stage1")

    p = sub.add_parser("distill-stage2", help="controllability distillation")
    common(p)
    p.add_argument("--stage1", required=True, help="stage-1 checkpoint")
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_distill_stage2, _stage="stage2")

    p = sub.add_parser("eval", help="held-out metrics for a checkpoint vs the bicubic baseline")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-alpha", help="blend-coefficient sweep over two restorers")
    common(p)
    p.add_argument("--ckpt-f", required=True)
    p.add_argument("--ckpt-r", required=True)
    p.set_defaults(func=cmd_sweep_alpha)

    p = sub.add_parser("sweep-t", help="knob sweep over a stage-2 checkpoint")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_sweep_t)

    p = sub.add_parser("serve", help="HTTP inference service")
    common(p, out_required=False)
    p.add_argument("--models-dir", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui-dir", default=None, help="optional static explorer bundle to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TunesrError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
