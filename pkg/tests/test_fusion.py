import numpy as np
import pytest

from mcevit import imaging as im
from mcevit import nn
from mcevit.fusion import (
    BackboneMode,
    FusionConfig,
    FusionModel,
    ModelMismatchError,
    Variant,
    fused_forward,
    head_param_count,
    infer_probabilities,
    init_fusion_model,
    init_head,
    predict,
    predict_from_probabilities,
    preprocess,
    preprocess_batch,
)
from mcevit.vit import VitConfig

from . import oracles
from .oracles import central_difference, rel_error

LARGE = FusionConfig(vit=VitConfig(embed_dim=1024, depth=1, heads=16))
SMALL = FusionConfig(vit=VitConfig(image_size=32, patch_size=8, embed_dim=16, depth=1, heads=2), pool_kernel=4, pool_stride=4, hidden=32)
# under 10k parameters in total
TOY = FusionConfig(
    vit=VitConfig(image_size=16, patch_size=8, embed_dim=8, depth=1, heads=2, mlp_ratio=2.0),
    pool_kernel=4,
    pool_stride=4,
    hidden=16,
    backbone_mode=BackboneMode.END_TO_END,
)


def random_image(seed, size):
    return im.ImageU8(np.random.default_rng(seed).integers(0, 256, size=(size, size, 3), dtype=np.uint8))


class TestArithmetic:
    def test_large_scale_widths(self):
        assert LARGE.pooled_width == 64
        assert LARGE.head_input_width == 1088
        assert head_param_count(LARGE) == 559_107

    def test_large_scale_trainable_count(self):
        head = init_head(LARGE, np.random.default_rng(0))
        model = FusionModel(LARGE, {}, {}, head)
        assert model.trainable_param_count() == 559_107
        assert head["w1"].shape == (1088, 512)

    @pytest.mark.parametrize("d, k", [(16, 4), (32, 16), (64, 8), (128, 16), (256, 32)])
    def test_width_invariant(self, d, k):
        cfg = FusionConfig(vit=VitConfig(embed_dim=d, heads=4), pool_kernel=k, pool_stride=k)
        assert cfg.head_input_width == d // k + d
        assert head_param_count(cfg) == (d // k + d) * 512 + 512 + 512 * 3 + 3

    def test_overlapping_pool_width(self):
        cfg = FusionConfig(vit=VitConfig(embed_dim=32, heads=4), pool_kernel=8, pool_stride=4)
        assert cfg.pooled_width == 7

    def test_validation(self):
        with pytest.raises(ValueError):
            FusionConfig(vit=VitConfig(embed_dim=24, heads=4), pool_kernel=16, pool_stride=16)
        with pytest.raises(ValueError):
            FusionConfig(classes=4)
        with pytest.raises(ValueError):
            FusionConfig(hidden=0)

    def test_desk_default_model(self):
        model = init_fusion_model(FusionConfig(), 7)
        assert model.config.head_input_width == 136
        assert model.trainable_param_count() == head_param_count(model.config)
        assert set(model.trainable_parameters()) == {"head.w1", "head.b1", "head.w2", "head.b2"}


class TestPreprocess:
    def test_constant_image(self):
        img = im.ImageU8(np.full((32, 32, 3), 128, dtype=np.uint8))
        rgb, ycc = preprocess(img, SMALL)
        expected = (128 / 255 - 0.5) / 0.5
        assert np.allclose(ycc, expected, atol=1e-7)
        assert np.allclose(rgb, expected, atol=1e-7)
        assert expected == pytest.approx(0.0039, abs=1e-4)

    def test_rgb_range(self):
        rgb, _ = preprocess(random_image(1, 40), SMALL)
        assert rgb.shape == (3, 32, 32)
        assert rgb.min() >= -1.0 and rgb.max() <= 1.0

    def test_enriched_chroma_against_naive_pipeline(self):
        img = random_image(2, 32)
        _, ycc = preprocess(img, SMALL)
        table = oracles.scaled_table(im.CHROMA_BASE.tolist(), 90)
        for plane, idx in ((1, 0), (2, 1)):
            ref = np.zeros((32, 32))
            src = np.zeros((32, 32))
            for i in range(32):
                for j in range(32):
                    src[i, j] = oracles.ycbcr_pixel(*(float(v) for v in img.data[i, j]))[plane]
            deg = oracles.chroma_roundtrip_420(src, table)
            ref = ((2.0 * src - deg) / 255.0 - 0.5) / 0.5
            assert np.max(np.abs(ycc[plane] - ref)) <= 1e-6

    def test_resizes_and_handles_unaligned(self):
        rgb, ycc = preprocess(random_image(3, 21), SMALL)
        assert rgb.shape == ycc.shape == (3, 32, 32)

    def test_dtype_follows_default(self):
        rgb, ycc = preprocess(random_image(4, 32), SMALL)
        assert rgb.dtype == ycc.dtype == np.float32
        with nn.default_dtype(np.float64):
            rgb, _ = preprocess(random_image(4, 32), SMALL)
        assert rgb.dtype == np.float64


class TestForward:
    def test_probabilities_contract(self):
        model = init_fusion_model(SMALL, 3)
        rgb, ycc = preprocess_batch([random_image(i, 32) for i in range(5)], SMALL)
        res = fused_forward(model, rgb, ycc)
        p = res.probabilities.data
        assert p.shape == (5, 3)
        assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-6)
        assert np.all((p > 0) & (p < 1))
        assert res.features.shape == (5, 20)

    def test_batched_inference_matches_single(self):
        model = init_fusion_model(SMALL, 3)
        rgb, ycc = preprocess_batch([random_image(i, 32) for i in range(5)], SMALL)
        probs, feats = infer_probabilities(model, rgb, ycc, batch_size=2)
        one = fused_forward(model, rgb[3], ycc[3])
        assert np.allclose(probs[3], one.probabilities.data[0], atol=1e-6)
        assert feats.shape == (5, 20)

    def test_pooling_shift(self):
        model = init_fusion_model(SMALL, 4)
        rgb, ycc = preprocess_batch([random_image(9, 32)], SMALL)
        with nn.default_dtype(np.float64):
            f = np.random.default_rng(0).normal(size=(1, 16))
            a = nn.avg_pool_1d(nn.Tensor(f), 4, 4).data
            b = nn.avg_pool_1d(nn.Tensor(f + 2.5), 4, 4).data
        assert np.allclose(b - a, 2.5, atol=1e-12)
        assert model.config.pooled_width == 4

    def test_rgb_branch_shared_across_variants(self):
        fused = init_fusion_model(SMALL, 11)
        rgb_only = init_fusion_model(FusionConfig(vit=SMALL.vit, hidden=32, variant=Variant.RGB_ONLY), 11)
        for k, v in fused.rgb_branch.items():
            assert v.data.tobytes() == rgb_only.rgb_branch[k].data.tobytes()
        assert rgb_only.ycbcr_branch is None
        assert rgb_only.config.head_input_width == 16

    def test_frozen_branches_have_no_gradient(self):
        model = init_fusion_model(SMALL, 5)
        rgb, ycc = preprocess_batch([random_image(i, 32) for i in range(2)], SMALL)
        probs = fused_forward(model, rgb, ycc).probabilities
        nn.crossentropy(probs, np.eye(3)[[0, 2]]).backward()
        for name, p in model.parameters().items():
            if name.startswith("head."):
                assert p.grad is not None
            else:
                assert p.grad is None, name


def _toy_setup(dtype):
    with nn.default_dtype(dtype):
        model = init_fusion_model(TOY, 21)
        rgb, ycc = preprocess_batch([random_image(30, 16), random_image(31, 16)], TOY)
    # lift the head out of its near-uniform start so every gradient is non-trivial
    rng = np.random.default_rng(22)
    model.head["w1"].data = (model.head["w1"].data * 4).astype(dtype)
    model.head["w2"].data = rng.normal(size=model.head["w2"].shape).astype(dtype)
    return model, rgb, ycc, np.eye(3)[[1, 2]]


def _analytic(model, rgb, ycc, onehot):
    nn.crossentropy(fused_forward(model, rgb, ycc).probabilities, onehot).backward()
    return {k: p.grad.copy() for k, p in model.parameters().items()}


def _numeric(model, rgb, ycc, onehot):
    def value():
        with nn.no_grad():
            return float(nn.crossentropy(fused_forward(model, rgb, ycc).probabilities, onehot).data)

    return {k: central_difference(value, p.data, 1e-6) for k, p in model.parameters().items()}


@pytest.fixture(scope="module")
def toy_numeric_grads():
    with nn.default_dtype(np.float64):
        model, rgb, ycc, onehot = _toy_setup(np.float64)
        return model.state_dict(), _numeric(model, rgb, ycc, onehot)


def test_toy_model_is_small():
    model, *_ = _toy_setup(np.float64)
    assert sum(p.size for p in model.parameters().values()) <= 10_000


@pytest.mark.parametrize("dtype, tol", [(np.float64, 1e-3), (np.float32, 1e-2)])
def test_end_to_end_finite_difference(toy_numeric_grads, dtype, tol):
    """Every parameter of the toy fused model against float64 central differences."""
    state, numeric = toy_numeric_grads
    with nn.default_dtype(dtype):
        model, rgb, ycc, onehot = _toy_setup(dtype)
        model.load_state_dict(state)
        analytic = _analytic(model, rgb, ycc, onehot)
    # tensors with an exactly-zero true gradient are judged against the model's gradient scale
    floor = 1e-4 * max(float(np.max(np.abs(g))) for g in numeric.values())
    for name, grad in analytic.items():
        assert grad.dtype == dtype
        assert rel_error(grad, numeric[name], floor=floor) <= tol, name


class TestPredict:
    def test_examples(self):
        assert predict_from_probabilities(np.array([[0.9, 0.05, 0.05]])).tolist() == [0]
        assert predict_from_probabilities(np.array([[1 / 3, 1 / 3, 1 / 3]])).tolist() == [0]
        assert predict_from_probabilities(np.array([[0.2, 0.4, 0.4]])).tolist() == [1]

    def test_argmax_of_softmax(self):
        z = np.random.default_rng(0).normal(size=(200, 3))
        with nn.default_dtype(np.float64):
            p = nn.softmax(nn.Tensor(z)).data
        assert np.array_equal(predict_from_probabilities(p), np.argmax(z, axis=1))

    def test_predict_single_image(self):
        model = init_fusion_model(SMALL, 6)
        assert predict(model, random_image(1, 32)) in (0, 1, 2)


class TestStateDict:
    def test_round_trip_and_mismatch(self):
        a = init_fusion_model(SMALL, 1)
        b = init_fusion_model(SMALL, 2)
        b.load_state_dict(a.state_dict())
        for k, v in a.parameters().items():
            assert v.data.tobytes() == b.parameters()[k].data.tobytes()
        state = a.state_dict()
        state.pop("head.b2")
        with pytest.raises(ModelMismatchError):
            b.load_state_dict(state)
        state = a.state_dict()
        state["head.b2"] = np.zeros(4)
        with pytest.raises(ModelMismatchError):
            b.load_state_dict(state)
