"""Acceptance suite: one test per criterion, each printing its pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
verdicts as they complete. The toy pipeline behind criteria 4-6 is trained once
per session (see conftest.acceptance_bundle).
"""

import base64
import json
import os
import time

import pytest
import torch
from scipy.stats import spearmanr

from fdcheck import max_rel_error_vs_fd, named_params
from tunesr.checkpoint import load_model_checkpoint
from tunesr.cli import run_cli
from tunesr.degradation import DegradationSample, apply_operator, gaussian_kernel
from tunesr.diffusion import add_noise, sr_at_t, step_noise, step_noise_endpoint_scaled, student_restore
from tunesr.evaluation import linear_blend, metric_row, psnr, ssim, sweep_t, toy_fid
from tunesr.losses import (
    LossWeights,
    PercepExtractor,
    control_loss,
    distill_loss,
    percep_dist,
    rec_loss,
    stage1_loss,
    stage2_loss,
)
from tunesr.nets import IdentityCodec, init_denoiser
from tunesr.toydata import make_toy_corpus, make_toy_image
from tunesr.training import TrainConfig, param_fingerprint, run_stage2


def _verdict(criterion: int, ok: bool, detail: str) -> bool:
    print(f"[criterion {criterion:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def _mean(values):
    return sum(values) / len(values)


def _tiny_net(seed, randomize_head=True):
    net = init_denoiser(seed, 4, 1, 6, cond_dim=3).double()
    if randomize_head:
        g = torch.Generator().manual_seed(seed + 100)
        with torch.no_grad():
            for name, p in net.named_parameters():
                if name.startswith("conv_out"):
                    p.copy_(torch.randn(p.shape, generator=g, dtype=torch.float64) * 0.2)
    return net


class TestCriterion1GradientOracle:
    def test_all_losses_match_finite_differences(self):
        started = time.perf_counter()
        ex = PercepExtractor(seed=0)
        codec = IdentityCodec()
        g = torch.Generator().manual_seed(1)
        x_lr = (0.15 + 0.7 * torch.rand(3, 4, 4, generator=g)).double()
        x_gt = (0.15 + 0.7 * torch.rand(3, 8, 8, generator=g)).double()
        z0 = torch.rand(3, 6, 6, generator=g, dtype=torch.float64)
        eps = torch.randn(3, 8, 8, generator=g, dtype=torch.float64)
        student = _tiny_net(2)
        teacher_f = _tiny_net(3)
        teacher_r = _tiny_net(4)
        for p in list(teacher_f.parameters()) + list(teacher_r.parameters()):
            p.requires_grad_(False)
        params = named_params(student)
        assert student.n_params < 5000

        def loss_rec():
            _, x0 = student_restore(student, codec, x_lr, scale=2)
            return rec_loss(x0, x_gt, LossWeights(), ex)

        def loss_fl():
            z0_s, _ = student_restore(student, codec, x_lr, scale=2)
            return distill_loss(teacher_f, student, add_noise(x_gt, 0.4, eps),
                                add_noise(z0_s, 0.4, eps), 0.4, None, gamma_time=5.5)

        def loss_rn():
            z0_s, _ = student_restore(student, codec, x_lr, scale=2)
            return distill_loss(teacher_r, student, add_noise(x_gt, 0.6, eps),
                                add_noise(z0_s, 0.6, eps), 0.6, None, gamma_time=5.5)

        def loss_s1():
            return stage1_loss([(x_lr, x_gt)], student, teacher_f, teacher_r, codec,
                               LossWeights(), ex, torch.Generator().manual_seed(5), scale=2)

        def loss_ctrl():
            return control_loss(teacher_f, student, z0, 0.3, 0.8)

        def loss_s2():
            return stage2_loss([z0], teacher_f, student, torch.Generator().manual_seed(6))

        worst = {}
        for name, fn in [("L_rec", loss_rec), ("L_fl", loss_fl), ("L_rn", loss_rn),
                         ("L_s1", loss_s1), ("L_ctrl", loss_ctrl), ("L_s2", loss_s2)]:
            worst[name] = max_rel_error_vs_fd(fn, params, h=1e-4)
        elapsed = time.perf_counter() - started
        ok = all(v < 1e-3 for v in worst.values()) and elapsed < 120
        detail = ", ".join(f"{k} rel err {v:.2e}" for k, v in worst.items()) + f"; {elapsed:.0f}s"
        assert _verdict(1, ok, detail)


class TestCriterion2FlowAlgebra:
    def test_composition_recovery_and_variant_divergence(self):
        g = torch.Generator().manual_seed(7)
        worst_comp = 0.0
        for _ in range(100):
            z0 = torch.rand(3, 5, 5, generator=g, dtype=torch.float64)
            eps = torch.randn(3, 5, 5, generator=g, dtype=torch.float64)
            u = torch.rand(2, generator=g, dtype=torch.float64)
            t, tp = float(u.min()), float(u.max())
            direct = add_noise(z0, tp, eps)
            composed = step_noise(add_noise(z0, t, eps), t, tp, eps)
            worst_comp = max(worst_comp, float((direct - composed).abs().max()))
        z0 = torch.rand(3, 5, 5, generator=g, dtype=torch.float64)
        eps = torch.randn(3, 5, 5, generator=g, dtype=torch.float64)
        z_t = add_noise(z0, 0.37, eps)
        recovery = float(((z_t - z0) / 0.37 - eps).abs().max())
        variant_gap = float(
            (step_noise_endpoint_scaled(z_t, 0.37, 0.8, eps) - step_noise(z_t, 0.37, 0.8, eps)).abs().max()
        )
        variant_equal_at_zero = torch.equal(
            step_noise_endpoint_scaled(z0, 0.0, 0.8, eps), step_noise(z0, 0.0, 0.8, eps)
        )
        ok = worst_comp < 1e-12 and recovery < 1e-12 and variant_gap > 0 and variant_equal_at_zero
        assert _verdict(
            2, ok,
            f"composition max gap {worst_comp:.1e}, eps recovery {recovery:.1e}, "
            f"variant diverges by {variant_gap:.3f} at t>0 and matches at t=0",
        )


class TestCriterion3ZeroCases:
    def test_every_documented_zero_case(self):
        ex = PercepExtractor(seed=8)
        img = make_toy_image(24, 9)
        checks = {}
        checks["percep(x,x)=0"] = float(percep_dist(ex, img, img)) == 0.0
        checks["rec(x,x)=0"] = float(rec_loss(img, img, LossWeights(), ex)) == 0.0
        net = _tiny_net(10)
        z = torch.rand(3, 6, 6, generator=torch.Generator().manual_seed(11), dtype=torch.float64)
        checks["distill(teacher==student)=0"] = float(
            distill_loss(net, net, z, z.clone(), 0.5, None, 5.5)
        ) == 0.0
        clean = _tiny_net(12, randomize_head=False)
        mid = (0.2 + 0.6 * torch.rand(3, 6, 6, generator=torch.Generator().manual_seed(13))).double()
        checks["stage1(perfect)=0"] = float(
            stage1_loss([(mid, mid)], clean, clean, clean, IdentityCodec(), LossWeights(), ex,
                        torch.Generator().manual_seed(14), scale=1)
        ) == 0.0

        class Const:
            def __init__(self, v):
                self.v = v

            def __call__(self, zz, t, c=None):
                return torch.full_like(zz, self.v)

        checks["control(const field)=0"] = float(control_loss(Const(0.5), Const(0.5), z, 0.2, 0.7)) == 0.0
        checks["stage2(const field)=0"] = float(
            stage2_loss([z], Const(0.25), Const(0.25), torch.Generator().manual_seed(15))
        ) == 0.0
        checks["psnr cap"] = psnr(img, img) == 99.0
        checks["ssim(x,x)=1"] = ssim(img, img) == 1.0
        imgs = [make_toy_image(24, 16 + i) for i in range(6)]
        checks["toy_fid(X,X)~0"] = toy_fid(imgs, imgs, ex) < 1e-6
        ok = all(checks.values())
        assert _verdict(3, ok, ", ".join(f"{k} {'ok' if v else 'BAD'}" for k, v in checks.items()))


class TestCriterion4TeacherPolarity:
    def test_fidelity_and_realness_poles_exist(self, acceptance_bundle):
        b = acceptance_bundle
        gts = [gt for _, gt in b.heldout]
        psnr_f = _mean([psnr(o, g) for o, g in zip(b.outputs["teacher_f"], gts)])
        psnr_r = _mean([psnr(o, g) for o, g in zip(b.outputs["teacher_r"], gts)])
        pc_f = _mean([float(percep_dist(b.ex, o, g)) for o, g in zip(b.outputs["teacher_f"], gts)])
        pc_r = _mean([float(percep_dist(b.ex, o, g)) for o, g in zip(b.outputs["teacher_r"], gts)])
        ok = psnr_f > psnr_r and pc_r < pc_f
        assert _verdict(
            4, ok,
            f"T_f psnr {psnr_f:.2f} vs T_r {psnr_r:.2f}; T_r percep {pc_r:.4f} vs T_f {pc_f:.4f}",
        )


class TestCriterion5Stage1Tradeoff:
    def test_student_improves_both_axes(self, acceptance_bundle):
        b = acceptance_bundle
        gts = [gt for _, gt in b.heldout]
        psnr_s = _mean([psnr(o, g) for o, g in zip(b.outputs["student"], gts)])
        psnr_r = _mean([psnr(o, g) for o, g in zip(b.outputs["teacher_r"], gts)])
        pc_s = _mean([float(percep_dist(b.ex, o, g)) for o, g in zip(b.outputs["student"], gts)])
        pc_f = _mean([float(percep_dist(b.ex, o, g)) for o, g in zip(b.outputs["teacher_f"], gts)])
        pc_ablation = _mean([float(percep_dist(b.ex, o, g)) for o, g in zip(b.outputs["ablation"], gts)])
        ok = psnr_s > psnr_r and pc_s < pc_f and pc_ablation > pc_s
        assert _verdict(
            5, ok,
            f"student psnr {psnr_s:.2f} > T_r {psnr_r:.2f}; student percep {pc_s:.4f} < T_f {pc_f:.4f}; "
            f"no-distill percep {pc_ablation:.4f} > student {pc_s:.4f}",
        )

    def test_student_beats_bicubic_by_1db(self, acceptance_bundle):
        b = acceptance_bundle
        gts = [gt for _, gt in b.heldout]
        psnr_s = _mean([psnr(o, g) for o, g in zip(b.outputs["student"], gts)])
        psnr_b = _mean([psnr(o, g) for o, g in zip(b.outputs["bicubic"], gts)])
        ok = psnr_s >= psnr_b + 1.0
        assert _verdict(
            5, ok, f"student psnr {psnr_s:.2f} vs bicubic {psnr_b:.2f} (margin {psnr_s - psnr_b:+.2f} dB)"
        )


class TestCriterion6ControllabilityTrend:
    def test_spearman_trend_over_knob(self, acceptance_bundle):
        b = acceptance_bundle
        rows = sweep_t(
            b.flow, b.student, b.codec,
            [lr for lr, _ in b.heldout], [gt for _, gt in b.heldout],
            (0.0, 0.2, 0.4, 0.6, 0.8, 1.0), b.ex, scale=b.scale,
        )
        ts = [r.key for r in rows]
        rho_psnr = spearmanr(ts, [r.psnr for r in rows]).statistic
        rho_percep = spearmanr(ts, [r.percep for r in rows]).statistic
        detail = (
            "psnr " + "/".join(f"{r.psnr:.2f}" for r in rows)
            + "; percep " + "/".join(f"{r.percep:.4f}" for r in rows)
            + f"; rho_psnr {rho_psnr:.2f}, rho_percep {rho_percep:.2f}"
        )
        ok = rho_psnr >= 0.8 and rho_percep >= 0.8
        assert _verdict(6, ok, detail)


class TestCriterion7ConstantFieldRecovery:
    def test_stage2_recovers_synthetic_constant(self, tmp_path):
        corpus = tmp_path / "corpus"
        make_toy_corpus(corpus, 3, 64, seed=21)
        from tunesr.degradation import DegradationSpec, synth_dataset
        from tunesr.imaging import PatchSpec

        data = synth_dataset(
            corpus,
            DegradationSpec(blur_sigma_range=(0.8, 1.4), kernel_size=7, scale=2,
                            noise_sigma_range=(0.01, 0.03), seed=22),
            PatchSpec(size=16, stride=16, seed=23),
            6,
        )
        codec = IdentityCodec()
        stage1 = init_denoiser(24, 8, 1, 8)
        target = 0.11

        class Const:
            def __call__(self, z, t, c=None):
                return torch.full_like(z, target)

        flow, _ = run_stage2(
            stage1, data, TrainConfig(lr=3e-3, steps=500, batch_size=2, seed=25),
            codec, scale=2, teacher_field=Const(),
        )
        z0, _ = student_restore(stage1, codec, data[0][0], scale=2)
        with torch.no_grad():
            err = max(float(((flow(z0, t) - target) ** 2).mean() ** 0.5) for t in (0.1, 0.4, 0.7))
        ok = err < 1e-2
        assert _verdict(7, ok, f"recovered constant field within L2 {err:.4f} (limit 0.01)")


class TestCriterion8BlendOracle:
    def test_midpoint_beats_both_endpoints(self):
        ex = PercepExtractor(seed=26)
        base = [make_toy_image(32, 260 + i) for i in range(8)]
        g = torch.Generator().manual_seed(27)
        x_f = [(img + 0.08 * torch.randn(img.shape, generator=g)).clamp(0, 1) for img in base]
        x_r = [(img + 0.08 * torch.randn(img.shape, generator=g)).clamp(0, 1) for img in base]
        row0 = metric_row(0.0, x_r, base, ex)
        row5 = metric_row(0.5, [linear_blend(f, r, 0.5) for f, r in zip(x_f, x_r)], base, ex)
        row1 = metric_row(1.0, x_f, base, ex)
        ok = row5.psnr > row0.psnr and row5.psnr > row1.psnr
        assert _verdict(
            8, ok, f"psnr at alpha 0/0.5/1 = {row0.psnr:.2f}/{row5.psnr:.2f}/{row1.psnr:.2f}"
        )


class TestCriterion9DataConsistency:
    def test_descent_and_closed_form(self):
        from tunesr.evaluation import data_consistency_refine

        # closed form: identity operator contracts as (1-rho)^k
        delta = DegradationSample(blur_sigma=0.0, noise_sigma=0.0, kernel=gaussian_kernel(0.0, 3))
        x0 = make_toy_image(16, 28)
        y = make_toy_image(16, 29)
        out = data_consistency_refine(x0, y, delta, rho=0.5, iters=20)
        closed_gap = float((out - (y + (1 - 0.5) ** 20 * (x0 - y))).abs().max())

        sample = DegradationSample(blur_sigma=1.4, noise_sigma=0.0, kernel=gaussian_kernel(1.4, 9))
        gt = make_toy_image(32, 30)
        y_toy = apply_operator(gt, sample, 4)
        x = torch.full_like(gt, 0.5)
        r0 = float((apply_operator(x, sample, 4) - y_toy).norm())
        x10 = data_consistency_refine(x, y_toy, sample, rho=0.1, iters=10)
        r10 = float((apply_operator(x10, sample, 4) - y_toy).norm())
        ok = closed_gap < 1e-6 and r10 < r0
        assert _verdict(
            9, ok, f"closed-form gap {closed_gap:.1e}; residual {r0:.4f} -> {r10:.4f} after 10 iters"
        )


def _write_mini_config(root, corpus):
    cfg = {
        "degradation": {"scale": 2, "kernel_size": 7, "blur_sigma_range": [0.6, 1.2],
                         "noise_sigma_range": [0.01, 0.03]},
        "patch": {"size": 16, "stride": 16},
        "net": {"width": 8, "depth": 1, "t_embed_dim": 8},
        "train": {
            "teacher_f": {"steps": 6, "lr": 0.001},
            "teacher_r": {"steps": 6, "lr": 0.001},
            "stage1": {"steps": 5, "lr": 0.001},
            "stage2": {"steps": 5, "lr": 0.001},
        },
        "data": {"corpus_dir": str(corpus), "n_train_pairs": 4, "n_eval_pairs": 4},
    }
    path = root / "exp.yaml"
    path.write_text(json.dumps(cfg))
    return path


def _run_mini_pipeline(root, cfg_path, tag):
    out = root / tag
    out.mkdir()
    tf, tr = out / "teacher_f.ckpt", out / "teacher_r.ckpt"
    s1, s2 = out / "stage1.ckpt", out / "stage2.ckpt"
    csv = out / "sweep_t.csv"
    assert run_cli(["train-teacher", "--config", str(cfg_path), "--role", "fidelity", "--out", str(tf)]) == 0
    assert run_cli(["train-teacher", "--config", str(cfg_path), "--role", "realness", "--out", str(tr)]) == 0
    assert run_cli(["distill-stage1", "--config", str(cfg_path), "--teacher-f", str(tf),
                    "--teacher-r", str(tr), "--out", str(s1)]) == 0
    assert run_cli(["distill-stage2", "--config", str(cfg_path), "--stage1", str(s1), "--out", str(s2)]) == 0
    assert run_cli(["sweep-t", "--config", str(cfg_path), "--ckpt", str(s2), "--out", str(csv)]) == 0
    return [tf, tr, s1, s2, csv]


class TestCriterion10Reproducibility:
    def test_two_pipeline_runs_bitwise_identical(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TUNESR_EPOCH", "1700000000")
        corpus = tmp_path / "corpus"
        make_toy_corpus(corpus, 3, 64, seed=31)
        cfg_path = _write_mini_config(tmp_path, corpus)
        files_a = _run_mini_pipeline(tmp_path, cfg_path, "run_a")
        files_b = _run_mini_pipeline(tmp_path, cfg_path, "run_b")
        gaps = [a.name for a, b in zip(files_a, files_b) if a.read_bytes() != b.read_bytes()]
        ok = not gaps
        assert _verdict(10, ok, "checkpoints and sweep CSV bitwise identical across two runs"
                        if ok else f"mismatch in {gaps}")


class TestCriterion11CliContract:
    def test_sweep_t_rows_and_stage1_zero_steps(self, tmp_path):
        corpus = tmp_path / "corpus"
        make_toy_corpus(corpus, 3, 64, seed=32)
        cfg_path = _write_mini_config(tmp_path, corpus)
        out = tmp_path / "art"
        out.mkdir()
        tf, tr = out / "tf.ckpt", out / "tr.ckpt"
        assert run_cli(["train-teacher", "--config", str(cfg_path), "--role", "fidelity", "--out", str(tf)]) == 0
        assert run_cli(["train-teacher", "--config", str(cfg_path), "--role", "realness", "--out", str(tr)]) == 0
        s1, s2 = out / "s1.ckpt", out / "s2.ckpt"
        assert run_cli(["distill-stage1", "--config", str(cfg_path), "--teacher-f", str(tf),
                        "--teacher-r", str(tr), "--steps", "0", "--out", str(s1)]) == 0
        student, _ = load_model_checkpoint(s1)
        teacher, _ = load_model_checkpoint(tr)
        bitwise = param_fingerprint(student["restorer"]) == param_fingerprint(teacher["restorer"])
        assert run_cli(["distill-stage2", "--config", str(cfg_path), "--stage1", str(s1), "--out", str(s2)]) == 0
        csv = out / "sweep.csv"
        assert run_cli(["sweep-t", "--config", str(cfg_path), "--ckpt", str(s2), "--out", str(csv)]) == 0
        lines = csv.read_text().strip().splitlines()
        contract = (
            lines[0] == "t,psnr,ssim,percep,toy_fid"
            and len(lines) == 7
            and [ln.split(",")[0] for ln in lines[1:]] == ["0", "0.2", "0.4", "0.6", "0.8", "1"]
        )
        ok = bitwise and contract
        assert _verdict(
            11, ok,
            f"steps-0 checkpoint bitwise-equal to T_r: {bitwise}; sweep-t grid contract: {contract}",
        )


class TestCriterion12ServiceParity:
    def test_byte_identical_sr_and_metric_parity(self, acceptance_bundle, tmp_path):
        from fastapi.testclient import TestClient

        from tunesr.checkpoint import save_model_checkpoint
        from tunesr.imaging import png_bytes_from_tensor, tensor_from_png_bytes
        from tunesr.service import build_registry, create_app

        b = acceptance_bundle
        models = tmp_path / "models"
        models.mkdir()
        save_model_checkpoint(
            models / "stage2.ckpt", "stage2",
            {"restorer": b.student, "flow": b.flow},
            b.cfg.hash, 0, 0,
            extra={"scale": b.scale, "percep_seed": b.cfg.percep_seed,
                   "percep_channels": list(b.cfg.percep_channels), "codec_kind": b.cfg.codec_kind},
        )
        client = TestClient(create_app(build_registry(models)))
        x_lr, x_gt = b.heldout[0]
        payload = {
            "image": base64.b64encode(png_bytes_from_tensor(x_lr)).decode(),
            "t_knob": 0.4,
            "gt": base64.b64encode(png_bytes_from_tensor(x_gt)).decode(),
        }
        r1 = client.post("/sr", json=payload)
        r2 = client.post("/sr", json=payload)
        assert r1.status_code == 200
        identical = r1.json()["image"] == r2.json()["image"]
        out = tensor_from_png_bytes(base64.b64decode(r1.json()["image"]))
        gt_served = tensor_from_png_bytes(png_bytes_from_tensor(x_gt))
        parity = (
            abs(r1.json()["metrics"]["psnr"] - psnr(out, gt_served)) < 1e-9
            and abs(r1.json()["metrics"]["ssim"] - ssim(out, gt_served)) < 1e-9
            and abs(r1.json()["metrics"]["percep"] - float(percep_dist(b.ex, out, gt_served))) < 1e-9
        )
        ok = identical and parity
        assert _verdict(
            12, ok, f"byte-identical responses: {identical}; offline/online metric parity at 1e-9: {parity}"
        )
