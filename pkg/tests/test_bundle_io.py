import struct
import zlib

import numpy as np
import pytest

from lut_retouch.core.bundle_io import (
    HEADER,
    PREAMBLE_BYTES,
    decode_bundle,
    encode_bundle,
    export_bundle,
    import_bundle,
)
from lut_retouch.core.config import BUNDLE_MAGIC, ModelConfig, QuantSpec
from lut_retouch.core.errors import BadMagic, BundleError, ChecksumMismatch, IoFailure, VersionMismatch
from lut_retouch.core.lutgen import LutBundle, bake


def _assert_same_bundle(a, b):
    assert a.config == b.config
    assert a.quant == b.quant
    assert a.scale == b.scale
    np.testing.assert_array_equal(a.msb.table, b.msb.table)
    np.testing.assert_array_equal(a.lsb.table, b.lsb.table)
    np.testing.assert_array_equal(a.weight_lut.tables, b.weight_lut.tables)
    np.testing.assert_array_equal(a.basis, b.basis)


def test_export_import_preserves_every_table(tmp_path, small_model, small_quant):
    bundle = bake(small_model, small_quant)
    path = str(tmp_path / "m.icelut")
    size = export_bundle(bundle, path)
    assert size == (tmp_path / "m.icelut").stat().st_size
    _assert_same_bundle(import_bundle(path), bundle)


def test_layout_of_default_bundle(identity_bundle):
    data = encode_bundle(identity_bundle)
    assert data[:8] == BUNDLE_MAGIC
    fields = HEADER.unpack_from(data, 8)
    assert fields[:6] == (1, 10, 5, 2, 20, 17)
    assert fields[6:9] == (2.0, 16.0, 64)
    assert fields[9] == 1.0
    payload = data[PREAMBLE_BYTES:]
    assert fields[10] == zlib.crc32(payload) & 0xFFFFFFFF
    assert len(payload) == 2 * 4096 * 10 * 4 + 409_600 + 20 * 17 ** 3 * 3 * 4


def test_bad_magic(identity_bundle):
    data = encode_bundle(identity_bundle)
    with pytest.raises(BadMagic):
        decode_bundle(b"ICEMDL01" + data[8:])


def test_version_mismatch(identity_bundle):
    data = bytearray(encode_bundle(identity_bundle))
    struct.pack_into("<I", data, 8, 2)
    with pytest.raises(VersionMismatch):
        decode_bundle(bytes(data))


def test_truncation_and_corruption(identity_bundle):
    data = encode_bundle(identity_bundle)
    with pytest.raises(ChecksumMismatch):
        decode_bundle(data[:-1])
    with pytest.raises(ChecksumMismatch):
        decode_bundle(data[:20])
    with pytest.raises(ChecksumMismatch):
        decode_bundle(data + b"\x00")
    flipped = bytearray(data)
    flipped[-3] ^= 0xFF
    with pytest.raises(ChecksumMismatch):
        decode_bundle(bytes(flipped))


def test_invalid_header_configuration(identity_bundle):
    data = bytearray(encode_bundle(identity_bundle))
    # C = 11 is not K x L.
    struct.pack_into("<I", data, 12, 11)
    with pytest.raises(BundleError):
        decode_bundle(bytes(data))


def test_inconsistent_level_count(identity_bundle):
    data = bytearray(encode_bundle(identity_bundle))
    struct.pack_into("<I", data, 8 + 32, 65)
    with pytest.raises(BundleError):
        decode_bundle(bytes(data))


def test_missing_file(tmp_path):
    with pytest.raises(IoFailure):
        import_bundle(str(tmp_path / "absent.icelut"))


def test_export_into_missing_directory(tmp_path, identity_bundle):
    with pytest.raises(IoFailure):
        export_bundle(identity_bundle, str(tmp_path / "no" / "x.icelut"))


@pytest.mark.parametrize("delta_s, offset", [(0.1, 40.0), (0.2, 7.5), (1.5, 4.0)])
def test_fractional_quantization_survives_round_trip(tiny_config, delta_s, offset):
    quant = QuantSpec(delta_s, offset)
    bundle = LutBundle.identity(tiny_config, quant)
    decoded = decode_bundle(encode_bundle(bundle))
    assert decoded.quant == quant
    assert decoded.quant.levels == quant.levels
    _assert_same_bundle(decoded, bundle)


def test_bundle_records_table_shape_only(tmp_path, small_model, small_quant):
    path = str(tmp_path / "m.icelut")
    export_bundle(bake(small_model, small_quant), path)
    cfg = import_bundle(path).config
    assert (cfg.channels, cfg.groups, cfg.group_length, cfg.basis_count, cfg.bins) == (6, 3, 2, 4, 5)
    assert cfg.layer_widths == ModelConfig().layer_widths
    assert cfg == small_model.config.table_shape()


def test_two_bakes_encode_identically(small_model, small_quant):
    first = encode_bundle(bake(small_model, small_quant))
    second = encode_bundle(bake(small_model.copy(), small_quant))
    assert first == second
