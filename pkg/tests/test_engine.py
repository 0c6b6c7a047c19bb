import json

import numpy as np
import pytest

from lut_retouch.core.engine import (
    INTERPOLATION_OPS_PER_PIXEL,
    OpCounter,
    bench,
    count_ops,
    lut_features,
    lut_weights,
    network_weights,
    retouch,
    verify_equivalence,
)
from lut_retouch.core.errors import ConfigError, DimensionMismatch, PreconditionError
from lut_retouch.core.imaging import bilinear_downsample
from lut_retouch.core.lutgen import bake
from lut_retouch.core.model import NETWORK_EVALUATIONS, pooled_features_f32

from conftest import random_image


@pytest.fixture
def baked(small_model, small_quant):
    return bake(small_model, small_quant)


def test_identity_bundle_returns_input(identity_bundle, rng):
    img = random_image(rng, 40, 30)
    assert retouch(identity_bundle, img) == img


def test_lut_path_never_evaluates_the_network(baked, rng):
    img = random_image(rng, 24, 24)
    NETWORK_EVALUATIONS.reset()
    retouch(baked, img, working_size=16)
    assert NETWORK_EVALUATIONS.total == 0


def test_output_size_matches_input(baked, rng):
    img = random_image(rng, 37, 19)
    out = retouch(baked, img, working_size=16)
    assert (out.width, out.height) == (37, 19)


def test_retouch_is_deterministic_across_threads(baked, rng):
    img = random_image(rng, 33, 21)
    single = retouch(baked, img, working_size=16, threads=1)
    assert retouch(baked, img, working_size=16, threads=4) == single
    assert retouch(baked, img, working_size=16, threads=1) == single


def test_lut_features_match_network_pooling(baked, small_model, rng):
    working = random_image(rng, 16, 16)
    assert np.array_equal(lut_features(baked, working), pooled_features_f32(small_model, working))


def test_lut_weights_equal_fake_quantized_network(baked, small_model, small_quant, rng):
    for _ in range(3):
        working = random_image(rng, 16, 16)
        lut = lut_weights(baked, working)
        net = network_weights(small_model, working, small_quant, baked.scale)
        assert np.array_equal(lut, net)


def test_weight_deviation_within_bound(baked, small_model, small_quant, rng):
    bound = small_model.config.groups * baked.scale / 2
    for _ in range(3):
        working = random_image(rng, 16, 16)
        deviation = np.abs(lut_weights(baked, working) - network_weights(small_model, working, small_quant))
        assert deviation.max() <= bound + 1e-12


def test_verify_equivalence_within_bounds(baked, small_model, rng):
    images = [random_image(rng, 20, 20) for _ in range(3)]
    report = verify_equivalence(small_model, baked, images, working_size=16)
    assert report.within_bounds
    assert report.max_pixel_deviation == 0
    assert len(report.rows) == 3
    data = json.loads(report.to_json())
    assert data["within_bounds"] is True


def test_verify_detects_a_foreign_bundle(baked, small_model, rng):
    other = small_model.copy()
    other.head.biases[...] += 10.0
    images = [random_image(rng, 20, 20) for _ in range(2)]
    report = verify_equivalence(other, baked, images, working_size=16)
    assert not report.within_bounds
    assert report.max_weight_deviation > report.weight_bound


def test_verify_rejects_mismatched_architecture(baked, tiny_model, rng):
    with pytest.raises(DimensionMismatch):
        verify_equivalence(tiny_model, baked, [random_image(rng, 8, 8)])


def test_op_counts_for_default_configuration(identity_bundle):
    report = count_ops(identity_bundle, working_size=32, full_size=(64, 48))
    assert report.accumulation_adds == 2 * 1024 * 10
    assert report.adds == 20_480 + 10 + 10 + 4 * 20
    assert report.multiplies == 10 + 10 + 30 + 20
    assert report.table_lookups == 2 * 1024 + 5
    assert report.weight_stage_ops <= 30_000
    assert report.interpolation_ops == INTERPOLATION_OPS_PER_PIXEL * 64 * 48
    assert report.fusion_ops == (2 * 20 - 1) * 17 ** 3 * 3


def test_accumulation_scales_with_working_pixels(identity_bundle):
    small = count_ops(identity_bundle, working_size=16, full_size=8)
    large = count_ops(identity_bundle, working_size=32, full_size=8)
    assert large.accumulation_adds == 4 * small.accumulation_adds
    # Everything after pooling is independent of the working size.
    assert large.multiplies == small.multiplies
    assert large.adds - large.accumulation_adds == small.adds - small.accumulation_adds


def test_counter_is_optional(identity_bundle, rng):
    img = random_image(rng, 8, 8)
    counter = OpCounter()
    assert retouch(identity_bundle, img, counter=counter) == retouch(identity_bundle, img)
    assert counter.table_lookups > 0


def test_threads_from_environment(identity_bundle, rng, monkeypatch):
    img = random_image(rng, 16, 16)
    monkeypatch.setenv("ICELUT_THREADS", "2")
    assert retouch(identity_bundle, img, threads=None) == img
    monkeypatch.setenv("ICELUT_THREADS", "zero")
    with pytest.raises(ConfigError):
        retouch(identity_bundle, img, threads=None)


def test_working_size_is_respected(baked, rng):
    img = random_image(rng, 64, 64)
    direct = lut_weights(baked, bilinear_downsample(img, 16, 16))
    counter = OpCounter()
    retouch(baked, img, working_size=16, counter=counter)
    assert counter.accumulation_adds == 2 * 256 * baked.config.channels
    assert direct.shape == (baked.config.basis_count,)


def test_bench_preconditions(identity_bundle, rng):
    img = random_image(rng, 8, 8)
    with pytest.raises(PreconditionError):
        bench(identity_bundle, [img], repeats=2)
    with pytest.raises(PreconditionError):
        bench(identity_bundle, [img], warmup=0)
    with pytest.raises(PreconditionError):
        bench(identity_bundle, [])


def test_bench_report(baked, small_model, rng):
    images = [random_image(rng, 24, 24) for _ in range(2)]
    report = bench(baked, images, repeats=3, model=small_model, working_size=16)
    assert report.image_count == 2 and report.repeats == 3
    assert report.weight_stage_ms.p10 <= report.weight_stage_ms.median <= report.weight_stage_ms.p90
    assert report.network_weight_stage_ms is not None
    assert report.weight_speedup is not None and report.weight_speedup > 0
    assert json.loads(report.to_json())["repeats"] == 3

