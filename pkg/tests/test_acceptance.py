"""End-to-end runs on synthetic data. Most are marked slow."""

import numpy as np
import pytest

from lut_retouch.core.config import ModelConfig, QuantSpec, TrainConfig
from lut_retouch.core.engine import bench, count_ops, network_retouch, retouch, verify_equivalence
from lut_retouch.core.lutgen import LutBundle, bake, feature_index, quantize_feature
from lut_retouch.core.metrics import psnr
from lut_retouch.core.model import NETWORK_EVALUATIONS, TrainableModel
from lut_retouch.core.synth import synth_pairs
from lut_retouch.core.training import train

from conftest import perturb, random_image


def _mean_psnr(outputs, pairs):
    return float(np.mean([psnr(out, target) for out, (_, target) in zip(outputs, pairs)]))


def test_index_sweep_hits_every_level():
    q = QuantSpec(2.0, 16.0)
    u = np.arange(-20000, 20001) / 1000.0
    idx = feature_index(u, q)
    assert idx.min() == 0 and idx.max() == 63
    assert np.unique(idx).size == 64
    np.testing.assert_array_equal(idx, np.rint((quantize_feature(u, q) + 16.0) * 2.0))


def test_conversion_fidelity_over_random_models():
    cfg = ModelConfig(
        channels=6, groups=3, group_length=2, basis_count=5, bins=9, layer_widths=(8, 16, 8)
    )
    quant = QuantSpec()
    rng = np.random.default_rng(42)
    images = [random_image(rng, 48, 40) for _ in range(2)]
    for seed in range(10):
        model = perturb(TrainableModel.initialize(cfg, seed=seed), rng)
        bundle = bake(model, quant)
        NETWORK_EVALUATIONS.reset()
        for img in images:
            retouch(bundle, img)
        assert NETWORK_EVALUATIONS.total == 0
        report = verify_equivalence(model, bundle, images)
        assert report.within_bounds
        assert report.max_pixel_deviation <= 1


def test_default_weight_stage_op_budget():
    report = count_ops(LutBundle.identity(ModelConfig(), QuantSpec()), working_size=32, full_size=(64, 64))
    assert report.weight_stage_ops <= 30_000


@pytest.fixture(scope="module")
def desk_model():
    pairs = synth_pairs(50, 64, "gamma-mix", seed=0)
    cfg = ModelConfig()
    # 1e-4 is tuned for runs of ~10^6 steps; a 2,000-step run needs a larger step.
    result = train(pairs, cfg, TrainConfig(epochs=1000, max_steps=2000, learning_rate=1e-3, seed=0))
    return result.model


@pytest.mark.slow
def test_desk_scale_learning_and_bake_drop(desk_model):
    held_out = synth_pairs(10, 64, "gamma-mix", seed=1)
    net = [network_retouch(desk_model, src) for src, _ in held_out]
    net_psnr = _mean_psnr(net, held_out)
    assert net_psnr >= 35.0

    bundle = bake(desk_model, QuantSpec())
    lut = [retouch(bundle, src) for src, _ in held_out]
    assert net_psnr - _mean_psnr(lut, held_out) <= 0.1


@pytest.mark.slow
def test_working_resolution_robustness(desk_model):
    held_out = synth_pairs(10, 64, "gamma-mix", seed=2)
    low = _mean_psnr([network_retouch(desk_model, s, working_size=32) for s, _ in held_out], held_out)
    high = _mean_psnr([network_retouch(desk_model, s, working_size=256) for s, _ in held_out], held_out)
    assert abs(low - high) < 0.5


@pytest.mark.slow
def test_wide_first_kernel_is_less_resolution_robust():
    pairs = synth_pairs(30, 64, "gamma-mix", seed=3)
    held_out = synth_pairs(8, 64, "gamma-mix", seed=4)
    schedule = TrainConfig(epochs=100, max_steps=600, learning_rate=1e-3, seed=0)
    base = dict(layer_widths=(16, 32, 16))

    def degradation(first_kernel):
        cfg = ModelConfig(first_kernel=first_kernel, **base)
        model = train(pairs, cfg, schedule).model
        score = {}
        for size in (32, 256):
            outs = [network_retouch(model, s, working_size=size) for s, _ in held_out]
            score[size] = _mean_psnr(outs, held_out)
        return abs(score[256] - score[32])

    assert degradation(3) > degradation(1)


@pytest.mark.slow
def test_colour_aware_branches_beat_per_channel_branches():
    pairs = synth_pairs(30, 32, "swap", seed=5)
    schedule = TrainConfig(epochs=100, max_steps=800, learning_rate=1e-3, seed=0)
    base = dict(layer_widths=(16, 32, 16), train_resolution=16)

    def tail_loss(input_channels):
        history = train(pairs, ModelConfig(input_channels=input_channels, **base), schedule).loss_history
        return float(np.mean(history[-100:]))

    assert tail_loss(3) < tail_loss(1)


@pytest.mark.slow
def test_lut_weight_stage_is_ten_times_faster():
    cfg = ModelConfig()
    rng = np.random.default_rng(0)
    model = perturb(TrainableModel.initialize(cfg, seed=0), rng)
    bundle = bake(model, QuantSpec())
    images = [random_image(rng, 256, 192) for _ in range(3)]
    report = bench(bundle, images, repeats=5, model=model, working_size=32)
    assert report.weight_speedup >= 10.0
