"""One test per acceptance criterion, each at its stated tolerance.

Every test emits a ``CRITERION <n> PASS|FAIL <detail>`` line; the lines are
repeated in the pytest terminal summary. Criteria 6 and 7 train the default
desk-scale model on 600 synthetic images for three seeds and are marked
``slow`` (about 9 minutes together on one CPU core).
"""

import numpy as np
import pytest

from mcevit import cli, nn
from mcevit import imaging as im
from mcevit.data import SynthConfig, generate_synthetic, select, split_dataset
from mcevit.evaluation import ConfusionMatrix, det_curve, evaluate, jpeg_sweep
from mcevit.fusion import FusionConfig, FusionModel, Variant, fused_forward, init_fusion_model, init_head, preprocess_batch
from mcevit.train import TrainConfig, train
from mcevit.vit import VitConfig, attention_rollout, init_vit, vit_forward

from . import oracles
from .test_fusion import _analytic, _numeric, _toy_setup
from .test_imaging import mean_psnr_curve, psnr_corpus
from .test_nn import CASE_NAMES, gradient_error, op_cases

SEEDS = (7, 8, 9)


def test_c1_architecture_arithmetic(verdict):
    cfg = FusionConfig(vit=VitConfig(embed_dim=1024, depth=1, heads=16), pool_kernel=16, pool_stride=16, hidden=512)
    model = FusionModel(cfg, {}, {}, init_head(cfg, np.random.default_rng(0)))
    width, count = cfg.head_input_width, model.trainable_param_count()
    verdict(1, width == 1088 and count == 559_107, f"concat width {width}, frozen trainable parameters {count:,}")


def test_c2_color_round_trip(verdict):
    corners = np.array([[r, g, b] for r in (0, 255) for g in (0, 255) for b in (0, 255)], dtype=np.uint8)
    rng = np.random.default_rng(2)
    pixels = np.concatenate([corners, rng.integers(0, 256, size=(10_000, 3), dtype=np.uint8)])
    img = im.ImageU8(pixels.reshape(1, -1, 3))
    back = im.ycbcr_to_rgb(im.rgb_to_ycbcr(img))
    err = int(np.max(np.abs(back.data.astype(int) - img.data.astype(int))))
    verdict(2, err <= 1, f"max channel error {err} over {len(pixels)} pixels")


def test_c3_degradation_sanity(verdict):
    curve = mean_psnr_curve(psnr_corpus(), range(100, 0, -10))
    monotone = all(a >= b for a, b in zip(curve, curve[1:]))
    rng = np.random.default_rng(55)
    worst = np.inf
    for img in psnr_corpus()[:10] + [im.ImageU8(rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8))]:
        p = im.rgb_to_ycbcr(img)
        worst = min(worst, im.psnr(p.stack(), im.jpeg_degrade(p, im.JpegSimConfig(100, "4:4:4")).stack()))
    verdict(
        3,
        monotone and worst >= 55.0,
        f"mean PSNR Q100..Q10 {curve[0]:.2f}..{curve[-1]:.2f} dB non-increasing={monotone}, Q100 4:4:4 min {worst:.2f} dB",
    )


def test_c4_enrichment_algebra(verdict):
    mismatches = 0
    for seed in range(5):
        p = im.rgb_to_ycbcr(im.ImageU8(np.random.default_rng(seed).integers(0, 256, (32, 32, 3), dtype=np.uint8)))
        for q in (90, 50, 10):
            cfg = im.JpegSimConfig(q)
            out, deg = im.enrich(p, cfg), im.jpeg_degrade(p, cfg)
            mismatches += int(np.sum(out.cb_plane != 2.0 * p.cb_plane - deg.cb_plane))
            mismatches += int(np.sum(out.cr_plane != 2.0 * p.cr_plane - deg.cr_plane))
    rng = np.random.default_rng(9)
    tiles = lambda: np.kron(rng.integers(20, 230, size=(2, 2)).astype(float), np.ones((16, 16)))  # noqa: E731
    exact = im.PlanarYCbCr(tiles(), tiles(), tiles())
    identity = np.array_equal(im.enrich(exact, im.JpegSimConfig(100)).stack(), exact.stack())
    verdict(4, mismatches == 0 and identity, f"{mismatches} elements differ from 2C-C', zero-error identity={identity}")


def test_c5_gradient_correctness(verdict):
    worst = {np.float64: 0.0, np.float32: 0.0}
    for dtype, h, seed in ((np.float64, 1e-6, 42), (np.float32, 1e-2, 43)):
        cases = op_cases(np.random.default_rng(seed))
        for name in CASE_NAMES:
            worst[dtype] = max(worst[dtype], gradient_error(*cases[name], dtype, h))
    with nn.default_dtype(np.float64):
        model, rgb, ycc, onehot = _toy_setup(np.float64)
        state, numeric = model.state_dict(), _numeric(model, rgb, ycc, onehot)
    floor = 1e-4 * max(float(np.max(np.abs(g))) for g in numeric.values())
    toy = {}
    for dtype in (np.float64, np.float32):
        with nn.default_dtype(dtype):
            model, rgb, ycc, onehot = _toy_setup(dtype)
            model.load_state_dict(state)
            analytic = _analytic(model, rgb, ycc, onehot)
        toy[dtype] = max(oracles.rel_error(g, numeric[k], floor=floor) for k, g in analytic.items())
    size = sum(p.size for p in model.parameters().values())
    ok = max(worst[np.float64], toy[np.float64]) <= 1e-3 and max(worst[np.float32], toy[np.float32]) <= 1e-2
    verdict(
        5,
        ok and size <= 10_000,
        f"ops f64 {worst[np.float64]:.1e} f32 {worst[np.float32]:.1e}; "
        f"toy fused model ({size} params) f64 {toy[np.float64]:.1e} f32 {toy[np.float32]:.1e}",
    )


# ---------------------------------------------------------------- desk-scale experiments


@pytest.fixture(scope="module")
def desk_runs():
    """Default fused and rgb_only models, one per seed, on the seed-7 corpus."""
    items = generate_synthetic(SynthConfig(200, 224, 7))
    runs = {}
    for seed in SEEDS:
        split = split_dataset(items, seed)
        test = select(items, split.test)
        images, labels = [it.image for it in test], [it.label for it in test]
        for variant in (Variant.FUSED, Variant.RGB_ONLY):
            model = init_fusion_model(FusionConfig(variant=variant), seed)
            model, _ = train(model, items, split, TrainConfig(epochs=50, seed=seed), progress=None)
            clean = evaluate(model, images, labels).accuracy
            sweep = jpeg_sweep(model, images, labels, [100, 50])
            runs[seed, variant] = (clean, sweep.point(100).accuracy, sweep.point(50).accuracy)
    return runs


@pytest.mark.slow
def test_c6_desk_scale_learning(verdict, desk_runs):
    accs = [desk_runs[s, Variant.FUSED][0] for s in SEEDS]
    ok = min(accs) >= 0.85 and float(np.mean(accs)) >= 0.90
    verdict(6, ok, "fused test accuracy " + ", ".join(f"seed {s}: {a:.4f}" for s, a in zip(SEEDS, accs)))


@pytest.mark.slow
def test_c7_robustness_direction(verdict, desk_runs):
    wins, parts = 0, []
    for s in SEEDS:
        _, f100, f50 = desk_runs[s, Variant.FUSED]
        _, r100, r50 = desk_runs[s, Variant.RGB_ONLY]
        wins += (f100 - f50) < (r100 - r50)
        parts.append(f"seed {s}: fused drop {f100 - f50:+.4f} rgb_only drop {r100 - r50:+.4f}")
    verdict(7, wins >= 2, f"{wins}/3 seeds strictly smaller; " + "; ".join(parts))


# ---------------------------------------------------------------- metrics, determinism, attention

SMALL = FusionConfig(
    vit=VitConfig(image_size=32, patch_size=8, embed_dim=16, depth=1, heads=2), pool_kernel=4, pool_stride=4, hidden=32
)


def test_c8_metric_exactness(verdict):
    items = generate_synthetic(SynthConfig(10, 32, 8))
    images, labels = [it.image for it in items], [it.label for it in items]
    model = init_fusion_model(SMALL, 8)
    model, _ = train(model, items, split_dataset(items, 8), TrainConfig(epochs=5), progress=None)
    sweep = jpeg_sweep(model, images, labels)
    results = [evaluate(model, images, labels)] + list(sweep.points)
    trace_ok = all(r.accuracy == np.trace(r.confusion.counts) / r.confusion.total for r in results)
    rng = np.random.default_rng(8)
    probs = rng.random((90, 3))
    probs /= probs.sum(axis=1, keepdims=True)
    det = det_curve(probs, np.repeat([0, 1, 2], 30))
    det_ok = all(
        c.fnr[0] == 0 and c.fpr[0] == 1 and np.all(np.diff(c.fpr) <= 0) and np.all(np.diff(c.fnr) >= 0)
        for c in det.classes
    )
    rows_ok = len(sweep.points) == 10
    cm = ConfusionMatrix.from_predictions(rng.integers(0, 3, 500), rng.integers(0, 3, 500))
    trace_ok = trace_ok and cm.accuracy() == np.trace(cm.counts) / 500
    verdict(8, trace_ok and det_ok and rows_ok, f"trace/N={trace_ok} DET invariants={det_ok} sweep rows {len(sweep.points)}")


def test_c9_determinism(verdict, tmp_path):
    data = tmp_path / "data"
    flags = [
        "--seed", "9", "--threads", "1", "--per-class", "10", "--synth-size", "32", "--data-dir", str(data),
        "--image-size", "32", "--patch-size", "8", "--embed-dim", "16", "--depth", "1", "--heads", "2",
        "--pool-kernel", "4", "--pool-stride", "4", "--hidden", "32", "--epochs", "4",
    ]  # fmt: skip
    assert cli.main(["synth", *flags]) == 0
    snapshots = []
    for mode in ("frozen", "end_to_end"):
        for attempt in range(2):
            out = tmp_path / f"{mode}_{attempt}"
            argv = flags + ["--out-dir", str(out), "--backbone-mode", mode]
            for cmd in ("train", "eval", "sweep-jpeg", "det"):
                assert cli.main([cmd, *argv]) == 0
            snapshots.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.is_file()})
    same = snapshots[0] == snapshots[1] and snapshots[2] == snapshots[3]
    verdict(9, same and len(snapshots[0]) >= 8, f"{len(snapshots[0])} files per run bitwise identical={same}")


def test_c10_attention_contract(verdict):
    cfg = VitConfig(image_size=32, patch_size=8, embed_dim=16, depth=3, heads=2)
    params = init_vit(cfg, np.random.default_rng(10))
    x = np.random.default_rng(11).normal(size=(1, 3, 32, 32))
    _, attn = vit_forward(params, x, cfg, record_attention=True)
    row_err = float(np.max(np.abs(attn.sum(axis=-1) - 1.0)))
    heat_err = float(np.max(np.abs(attention_rollout(attn[0]) - oracles.naive_heatmap(attn[0]))))
    model = init_fusion_model(SMALL, 10)
    rgb, ycc = preprocess_batch([generate_synthetic(SynthConfig(10, 32, 10))[0].image], SMALL)
    res = fused_forward(model, rgb, ycc, record_attention=True)
    for a in (res.rgb_attention, res.ycbcr_attention):
        row_err = max(row_err, float(np.max(np.abs(a.sum(axis=-1) - 1.0))))
    verdict(10, row_err <= 1e-5 and heat_err <= 1e-5, f"row-sum error {row_err:.1e}, rollout vs naive {heat_err:.1e}")
