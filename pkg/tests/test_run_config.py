import argparse
import json

import pytest

from lut_retouch.core.errors import ConfigError, IoFailure
from lut_retouch.core.run_config import (
    BakeSection,
    SynthSection,
    TrainSection,
    load_run_config,
    merge_overrides,
    parse_run_config,
)


def test_defaults_without_file():
    section = merge_overrides(TrainSection, None, "train", argparse.Namespace())
    assert section == TrainSection()
    assert section.model_config().channels == 10
    assert section.train_config().epochs == 400


def test_file_then_flags(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"bake": {"delta_s": 4, "offset": 32}, "synth": {"count": 7}}))
    config = load_run_config(str(path))
    bake = merge_overrides(BakeSection, config, "bake", argparse.Namespace(delta_s=None, offset=8.0))
    assert bake.delta_s == 4.0 and isinstance(bake.delta_s, float)
    assert bake.offset == 8.0
    assert bake.quant().levels == 64
    synth = merge_overrides(SynthSection, config, "synth", argparse.Namespace(count=None))
    assert synth.count == 7 and synth.size == 64


def test_layer_widths_become_a_tuple():
    config = parse_run_config({"train": {"layer_widths": [4, 8]}})
    section = merge_overrides(TrainSection, config, "train", argparse.Namespace())
    assert section.layer_widths == (4, 8)
    assert section.model_config().layer_count == 3


def test_full_head_mode():
    config = parse_run_config({"train": {"head_mode": "full", "channels": 6}})
    cfg = merge_overrides(TrainSection, config, "train", argparse.Namespace()).model_config()
    assert (cfg.groups, cfg.group_length) == (1, 6)


@pytest.mark.parametrize(
    "document",
    [
        [],
        {"deploy": {}},
        {"train": []},
        {"train": {"epoch": 3}},
        {"train": {"epochs": "3"}},
        {"train": {"epochs": True}},
        {"train": {"layer_widths": [1.5]}},
        {"bake": {"delta_s": "2"}},
        {"synth": {"transform": 3}},
    ],
)
def test_invalid_documents(document):
    with pytest.raises(ConfigError):
        parse_run_config(document)


def test_unreadable_files(tmp_path):
    with pytest.raises(IoFailure):
        load_run_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(str(bad))
