# lut_retouch/core/bundle_io.py

"""
Reading and writing LUT bundle files.

Layout (little-endian):

    magic       8 bytes, b"ICELUT01"
    header      version, C, K, L, N, M (u32), delta_s, R (f32), V (u32),
                s_w (f32), crc32 of the payload (u32)
    payload     MSB Channel LUT (f32, 4096 x C)
                LSB Channel LUT (f32, 4096 x C)
                Weight LUT (int8, K x V x V x N)
                basis lattices (f32, N x M x M x M x 3)

Only the table shape (C, K, L, N, M) of the architecture is recorded; a
decoded bundle reports default branch widths and training resolution.
"""

import logging
import struct
import zlib

import numpy as np

from .config import BUNDLE_MAGIC, BUNDLE_VERSION, CHANNEL_LUT_ENTRIES, ModelConfig, QuantSpec
from .errors import (
    BadMagic,
    BundleError,
    ChecksumMismatch,
    ConfigError,
    IoFailure,
    UnsupportedGroupLength,
    VersionMismatch,
)
from .lutgen import ChannelLut, LutBundle, WeightLut

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<IIIIIIffIfI")
PREAMBLE_BYTES = len(BUNDLE_MAGIC) + HEADER.size


def _from_f32(value: float) -> float:
    """The shortest decimal that rounds to the same float32, e.g. 0.1 rather than 0.10000000149."""
    return float(str(np.float32(value)))


def bundle_payload(bundle: LutBundle) -> bytes:
    """The section bytes that follow the header."""
    return b"".join(
        (
            bundle.msb.table.astype("<f4").tobytes(),
            bundle.lsb.table.astype("<f4").tobytes(),
            bundle.weight_lut.tables.astype(np.int8).tobytes(),
            bundle.basis.astype("<f4").tobytes(),
        )
    )


def encode_bundle(bundle: LutBundle) -> bytes:
    """Serializes a bundle to the on-disk byte layout."""
    cfg = bundle.config
    payload = bundle_payload(bundle)
    header = HEADER.pack(
        BUNDLE_VERSION,
        cfg.channels,
        cfg.groups,
        cfg.group_length,
        cfg.basis_count,
        cfg.bins,
        bundle.quant.delta_s,
        bundle.quant.offset,
        bundle.quant.levels,
        bundle.weight_lut.scale,
        zlib.crc32(payload) & 0xFFFFFFFF,
    )
    return BUNDLE_MAGIC + header + payload


def export_bundle(bundle: LutBundle, path: str) -> int:
    """
    Writes a bundle file.

    Returns:
        Number of bytes written.

    Raises:
        IoFailure: If the file cannot be written.
    """
    data = encode_bundle(bundle)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise IoFailure(f"Cannot write bundle '{path}': {e}") from e
    logger.debug("Wrote bundle '%s' (%d bytes).", path, len(data))
    return len(data)


def decode_bundle(data: bytes, source: str = "<bytes>") -> LutBundle:
    """
    Parses bundle bytes.

    Raises:
        BadMagic: If the magic bytes differ.
        VersionMismatch: If the format version is not supported.
        ChecksumMismatch: If the data is truncated, oversized or fails the CRC.
        BundleError: If the header describes an invalid configuration.
    """
    if data[: len(BUNDLE_MAGIC)] != BUNDLE_MAGIC:
        raise BadMagic(f"'{source}' is not a LUT bundle (bad magic).")
    if len(data) < PREAMBLE_BYTES:
        raise ChecksumMismatch(f"'{source}' is truncated inside the header.")
    (version, channels, groups, group_length, basis_count, bins,
     delta_s, offset, levels, scale, crc) = HEADER.unpack_from(data, len(BUNDLE_MAGIC))
    if version != BUNDLE_VERSION:
        raise VersionMismatch(
            f"'{source}' has format version {version}; only version {BUNDLE_VERSION} is supported."
        )

    try:
        config = ModelConfig(
            channels=channels,
            groups=groups,
            group_length=group_length,
            basis_count=basis_count,
            bins=bins,
        )
        quant = QuantSpec(delta_s=_from_f32(delta_s), offset=_from_f32(offset))
    except ConfigError as e:
        raise BundleError(f"'{source}' describes an invalid configuration: {e}") from e
    if quant.levels != levels:
        raise BundleError(f"'{source}' declares V={levels} but delta_s and R give {quant.levels}.")

    channel_count = CHANNEL_LUT_ENTRIES * channels
    weight_count = groups * levels * levels * basis_count
    basis_count_values = basis_count * bins ** 3 * 3
    expected = 4 * (2 * channel_count + basis_count_values) + weight_count
    payload = data[PREAMBLE_BYTES:]
    if len(payload) != expected:
        raise ChecksumMismatch(
            f"'{source}' payload is {len(payload)} bytes, expected {expected}."
        )
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumMismatch(f"'{source}' failed its CRC32 check.")

    pos = 0

    def take(dtype: str, count: int) -> np.ndarray:
        nonlocal pos
        width = np.dtype(dtype).itemsize * count
        array = np.frombuffer(payload, dtype=dtype, count=count, offset=pos)
        pos += width
        return array

    msb = take("<f4", channel_count).reshape(CHANNEL_LUT_ENTRIES, channels)
    lsb = take("<f4", channel_count).reshape(CHANNEL_LUT_ENTRIES, channels)
    tables = take("i1", weight_count).reshape(groups, levels, levels, basis_count)
    basis = take("<f4", basis_count_values).reshape((basis_count,) + (bins,) * 3 + (3,))
    try:
        return LutBundle(
            config, quant, ChannelLut("msb", msb), ChannelLut("lsb", lsb),
            WeightLut(tables, scale), basis,
        )
    except (ValueError, UnsupportedGroupLength) as e:
        raise BundleError(f"'{source}' holds invalid tables: {e}") from e


def import_bundle(path: str) -> LutBundle:
    """
    Reads a bundle file written by `export_bundle`.

    Raises:
        IoFailure: If the file cannot be read.
        BadMagic, VersionMismatch, ChecksumMismatch, BundleError: On malformed content.
    """
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoFailure(f"Cannot read bundle '{path}': {e}") from e
    return decode_bundle(data, path)
