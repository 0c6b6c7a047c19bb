import pytest

from lut_retouch.core.dataset import load_images, load_pairs
from lut_retouch.core.errors import DatasetError, EmptyDataset
from lut_retouch.core.imaging import ImageU8, save_image

from conftest import random_image


@pytest.fixture
def dirs(tmp_path, rng):
    inputs, targets = tmp_path / "input", tmp_path / "target"
    inputs.mkdir()
    targets.mkdir()
    for name in ("a.png", "b.ppm"):
        save_image(random_image(rng, 6, 4), str(inputs / name))
        save_image(random_image(rng, 6, 4), str(targets / name))
    return inputs, targets


def test_load_pairs(dirs):
    inputs, targets = dirs
    pairs = load_pairs(str(inputs), str(targets))
    assert [p.name for p in pairs] == ["a.png", "b.ppm"]
    assert pairs[0].source.width == 6


def test_unmatched_files_are_skipped(dirs, rng, caplog):
    inputs, targets = dirs
    save_image(random_image(rng, 6, 4), str(inputs / "c.png"))
    (inputs / "notes.txt").write_text("ignored")
    with caplog.at_level("WARNING"):
        pairs = load_pairs(str(inputs), str(targets))
    assert [p.name for p in pairs] == ["a.png", "b.ppm"]
    assert "no target" in caplog.text


def test_size_mismatch_is_a_dataset_error(dirs, rng):
    inputs, targets = dirs
    save_image(random_image(rng, 5, 4), str(targets / "a.png"))
    with pytest.raises(DatasetError):
        load_pairs(str(inputs), str(targets))


def test_missing_directory(tmp_path):
    with pytest.raises(DatasetError):
        load_pairs(str(tmp_path / "x"), str(tmp_path))


def test_no_shared_names(tmp_path, rng):
    (tmp_path / "i").mkdir()
    (tmp_path / "t").mkdir()
    save_image(random_image(rng, 2, 2), str(tmp_path / "i" / "one.png"))
    save_image(random_image(rng, 2, 2), str(tmp_path / "t" / "two.png"))
    with pytest.raises(EmptyDataset):
        load_pairs(str(tmp_path / "i"), str(tmp_path / "t"))


def test_load_images_skips_unreadable(tmp_path):
    save_image(ImageU8.filled(2, 2, (1, 2, 3)), str(tmp_path / "good.png"))
    (tmp_path / "bad.png").write_bytes(b"not an image")
    with pytest.raises(DatasetError):
        load_images(str(tmp_path))
    images = load_images(str(tmp_path), skip_unreadable=True)
    assert [name for name, _ in images] == ["good.png"]


def test_load_images_empty(tmp_path):
    with pytest.raises(EmptyDataset):
        load_images(str(tmp_path))
