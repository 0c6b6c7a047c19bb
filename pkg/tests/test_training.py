import numpy as np
import pytest

from lut_retouch.core.config import MODEL_MAGIC, ModelConfig, TrainConfig
from lut_retouch.core.errors import CheckpointError, ConfigError, DimensionMismatch, EmptyDataset, IoFailure
from lut_retouch.core.imaging import ImageU8
from lut_retouch.core.model import TrainableModel, forward, pooled_features
from lut_retouch.core.synth import synth_pairs
from lut_retouch.core.training import (
    AdamState,
    adam_step,
    load_checkpoint,
    save_checkpoint,
    train,
    write_loss_history,
)


def test_adam_constant_gradient_steps():
    cfg = TrainConfig(learning_rate=0.01)
    params = {"x": np.array([1.0, -2.0])}
    state = AdamState()
    for _ in range(3):
        adam_step(params, {"x": np.ones(2)}, state, cfg)
    expected_move = 3 * 0.01 / (1.0 + 1e-8)
    np.testing.assert_allclose(params["x"], [1.0 - expected_move, -2.0 - expected_move], rtol=1e-12)
    assert state.t == 3


def test_adam_updates_in_place():
    value = np.zeros(3)
    params = {"w": value}
    adam_step(params, {"w": np.array([1.0, -1.0, 0.0])}, AdamState(), TrainConfig(learning_rate=0.1))
    assert value[0] < 0 < value[1]
    assert value[2] == 0.0


def test_adam_rejects_mismatches():
    with pytest.raises(DimensionMismatch):
        adam_step({"a": np.zeros(2)}, {"b": np.zeros(2)}, AdamState(), TrainConfig())
    with pytest.raises(DimensionMismatch):
        adam_step({"a": np.zeros(2)}, {"a": np.zeros(3)}, AdamState(), TrainConfig())


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


def test_train_rejects_empty_and_mismatched(tiny_config):
    with pytest.raises(EmptyDataset):
        train([], tiny_config, TrainConfig(epochs=1))
    pair = (ImageU8.filled(4, 4, (1, 1, 1)), ImageU8.filled(3, 4, (1, 1, 1)))
    with pytest.raises(DimensionMismatch):
        train([pair], tiny_config, TrainConfig(epochs=1))


def test_train_reduces_loss(small_config):
    pairs = synth_pairs(4, 16, "gamma:0.6", seed=2)
    result = train(pairs, small_config, TrainConfig(epochs=40, learning_rate=5e-3, seed=1))
    assert len(result.loss_history) == 160
    first = np.mean(result.loss_history[:8])
    last = np.mean(result.loss_history[-8:])
    assert last < 0.7 * first


def test_identity_pairs_start_and_stay_near_zero_loss(tiny_config):
    pairs = [(src, src) for src, _ in synth_pairs(4, 16, "gamma-mix", seed=3)]
    result = train(pairs, tiny_config, TrainConfig(epochs=3, learning_rate=1e-4, seed=0))
    assert len(result.loss_history) == 12
    assert result.loss_history[0] < 0.01
    assert max(result.loss_history) < 0.05


def test_train_is_deterministic(tiny_config):
    pairs = synth_pairs(3, 8, "warm-tone", seed=4)
    cfg = TrainConfig(epochs=2, learning_rate=1e-3, seed=9)
    a = train(pairs, tiny_config, cfg)
    b = train(pairs, tiny_config, cfg)
    assert a.loss_history == b.loss_history
    assert np.array_equal(a.model.basis, b.model.basis)


def test_train_step_cap_and_batches(tiny_config):
    pairs = synth_pairs(5, 8, "channel-mix", seed=0)
    seen = []
    result = train(
        pairs,
        tiny_config,
        TrainConfig(epochs=10, batch_size=2, max_steps=4, learning_rate=1e-3),
        on_step=lambda step, loss: seen.append(step),
    )
    assert len(result.loss_history) == 4
    assert seen == [1, 2, 3, 4]


def test_loss_history_csv(tmp_path):
    path = tmp_path / "loss.csv"
    write_loss_history([0.5, 0.25], str(path))
    lines = path.read_text().splitlines()
    assert lines == ["step,loss", "1,0.50000000", "2,0.25000000"]


def test_checkpoint_round_trip_preserves_float32_values(tmp_path, small_model, rng):
    path = str(tmp_path / "m.icemdl")
    save_checkpoint(small_model, path)
    with open(path, "rb") as f:
        assert f.read(8) == MODEL_MAGIC
    loaded = load_checkpoint(path)
    assert loaded.config == small_model.config
    for name, value in small_model.parameters().items():
        np.testing.assert_array_equal(loaded.parameters()[name], value.astype(np.float32))
    img = ImageU8(rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8))
    expected = pooled_features(small_model, img)
    np.testing.assert_allclose(pooled_features(loaded, img), expected, atol=1e-5)


def test_checkpoint_keeps_variant_fields(tmp_path):
    cfg = ModelConfig(
        channels=4, groups=1, group_length=4, basis_count=2, bins=3,
        layer_widths=(3,), branch_mode="single", input_channels=1,
        first_kernel=3, head_mode="full",
    )
    path = str(tmp_path / "v.icemdl")
    save_checkpoint(TrainableModel.initialize(cfg, seed=2), path)
    assert load_checkpoint(path).config == cfg


def test_checkpoint_errors(tmp_path, tiny_model):
    bad_magic = tmp_path / "bad.icemdl"
    bad_magic.write_bytes(b"NOTAMODEL" + bytes(64))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(bad_magic))

    path = tmp_path / "ok.icemdl"
    save_checkpoint(tiny_model, str(path))
    raw = path.read_bytes()
    truncated = tmp_path / "short.icemdl"
    truncated.write_bytes(raw[:-5])
    with pytest.raises(CheckpointError):
        load_checkpoint(str(truncated))
    trailing = tmp_path / "long.icemdl"
    trailing.write_bytes(raw + b"\x00")
    with pytest.raises(CheckpointError):
        load_checkpoint(str(trailing))

    with pytest.raises(IoFailure):
        load_checkpoint(str(tmp_path / "missing.icemdl"))


def test_trained_model_runs_forward(tiny_config):
    pairs = synth_pairs(2, 8, "gamma:0.8", seed=3)
    model = train(pairs, tiny_config, TrainConfig(epochs=1, learning_rate=1e-3)).model
    out, weights = forward(model, pairs[0][0], pairs[0][0])
    assert out.width == 8 and weights.shape == (tiny_config.basis_count,)
