import os

import numpy as np
import pytest

from lut_retouch.core.errors import ConfigError
from lut_retouch.core.imaging import ImageU8, load_image
from lut_retouch.core.synth import (
    CHANNEL_MIX,
    apply_transform,
    parse_transform,
    synth_pairs,
    write_synth_dataset,
)


def test_channel_mix_keeps_grey():
    np.testing.assert_allclose(CHANNEL_MIX.sum(axis=1), 1.0)
    grey = ImageU8.filled(2, 2, (90, 90, 90))
    assert apply_transform(grey, parse_transform("channel-mix")) == grey


def test_gamma_transform():
    img = ImageU8.filled(1, 1, (64, 128, 255))
    out = apply_transform(img, parse_transform("gamma:0.5"))
    expected = np.floor(np.power(np.array([64, 128, 255]) / 255.0, 0.5) * 255.0 + 0.5)
    assert out.data[0, 0].tolist() == expected.astype(int).tolist()


@pytest.mark.parametrize("name", ["gamma:0", "gamma:abc", "sepia", ""])
def test_unknown_transforms(name):
    with pytest.raises(ConfigError):
        parse_transform(name)


def test_swap_depends_on_image_statistics():
    swap = parse_transform("swap")
    reddish = ImageU8.filled(2, 2, (200, 50, 10))
    bluish = ImageU8.filled(2, 2, (10, 50, 200))
    assert apply_transform(reddish, swap).data[0, 0].tolist() == [10, 50, 200]
    assert apply_transform(bluish, swap) == bluish


def test_synth_pairs_are_seeded():
    a = synth_pairs(3, 12, "warm-tone", seed=5)
    b = synth_pairs(3, 12, "warm-tone", seed=5)
    c = synth_pairs(3, 12, "warm-tone", seed=6)
    assert [p[0] for p in a] == [p[0] for p in b]
    assert [p[1] for p in a] == [p[1] for p in b]
    assert a[0][0] != c[0][0]
    assert (a[0][0].width, a[0][0].height) == (12, 12)


def test_synth_pairs_validation():
    with pytest.raises(ConfigError):
        synth_pairs(0, 8, "gamma-mix")
    with pytest.raises(ConfigError):
        synth_pairs(2, 0, "gamma-mix")


def test_write_synth_dataset(tmp_path):
    result = write_synth_dataset(str(tmp_path / "ds"), 3, 10, "gamma-mix", seed=1)
    assert result.names == ["0000.png", "0001.png", "0002.png"]
    assert sorted(os.listdir(result.input_dir)) == result.names
    assert sorted(os.listdir(result.target_dir)) == result.names
    pairs = synth_pairs(3, 10, "gamma-mix", seed=1)
    assert load_image(os.path.join(result.target_dir, "0001.png")) == pairs[1][1]
