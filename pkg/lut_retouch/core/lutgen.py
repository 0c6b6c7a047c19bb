# lut_retouch/core/lutgen.py

"""
Baking a trained model into lookup tables.

Each pointwise branch becomes a Channel LUT: its features for all 16^3
nibble triples, stored as float32. Each length-2 split-FC group becomes a
V x V Weight LUT over quantized feature pairs, stored as int8 with one global
scale. The basis lattices are copied as float32. Nothing in a bundle needs
the network at inference time.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Union

import numpy as np

from .config import CHANNEL_LUT_ENTRIES, INT8_LIMIT, NIBBLE_LEVELS, ModelConfig, QuantSpec
from .errors import (
    DimensionMismatch,
    PreconditionError,
    UnsupportedGroupLength,
    UnsupportedVariant,
)
from .model import NIBBLE_MAX, PointwiseBranch, SplitFC, TrainableModel, identity_table

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


# --- Feature quantization ---


def quantize_feature(u: ArrayLike, q: QuantSpec) -> ArrayLike:
    """
    Snaps features onto the 1/delta_s grid and clamps them to [-R, R - 1/delta_s].

    Works on scalars and arrays; values are promoted to float64 first.
    """
    values = np.asarray(u, dtype=np.float64)
    snapped = np.floor(values * q.delta_s) / q.delta_s
    result = np.clip(snapped, -q.offset, q.offset - 1.0 / q.delta_s)
    return float(result) if result.ndim == 0 else result


def feature_to_index(quantized: ArrayLike, q: QuantSpec) -> ArrayLike:
    """
    Maps a quantized feature to its Weight LUT index in [0, V - 1].

    Quantized values lie on the 1/delta_s grid, so (Q + R) * delta_s is an
    integer up to rounding error and is rounded rather than floored.
    """
    values = np.asarray(quantized, dtype=np.float64)
    index = np.clip(np.rint((values + q.offset) * q.delta_s), 0, q.levels - 1).astype(np.int64)
    return int(index) if index.ndim == 0 else index


def feature_index(u: ArrayLike, q: QuantSpec) -> ArrayLike:
    """quantize_feature followed by feature_to_index."""
    return feature_to_index(quantize_feature(u, q), q)


def dequantize_index(index: ArrayLike, q: QuantSpec) -> ArrayLike:
    """Feature value I / delta_s - R represented by a Weight LUT index."""
    values = np.asarray(index, dtype=np.float64) / q.delta_s - q.offset
    return float(values) if values.ndim == 0 else values


# --- Tables ---


def nibble_index(r: int, g: int, b: int) -> int:
    """Channel LUT row of a nibble triple."""
    return r * NIBBLE_LEVELS * NIBBLE_LEVELS + g * NIBBLE_LEVELS + b


@dataclass(frozen=True)
class ChannelLut:
    """
    Branch features for every nibble triple.

    Attributes:
        tag: "msb" or "lsb".
        table: (4096, C) float32, row r*256 + g*16 + b.
    """

    tag: str
    table: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        table = np.array(self.table, dtype=np.float32, order="C")
        if table.ndim != 2 or table.shape[0] != CHANNEL_LUT_ENTRIES:
            raise DimensionMismatch(
                f"Channel LUT must have {CHANNEL_LUT_ENTRIES} rows, got shape {table.shape}."
            )
        table.flags.writeable = False
        object.__setattr__(self, "table", table)

    @property
    def channels(self) -> int:
        return int(self.table.shape[1])

    def entry(self, r: int, g: int, b: int) -> np.ndarray:
        return self.table[nibble_index(r, g, b)]


@dataclass(frozen=True)
class WeightLut:
    """
    K two-dimensional tables of int8 partial weights.

    Attributes:
        tables: (K, V, V, N) int8; table k, cell (i, j) holds group k's
            output for the quantized pair (i, j), divided by `scale`.
        scale: Global dequantization scale s_w > 0.
    """

    tables: np.ndarray = field(repr=False)
    scale: float = 1.0

    def __post_init__(self) -> None:
        tables = np.array(self.tables, dtype=np.int8, order="C")
        if tables.ndim != 4 or tables.shape[1] != tables.shape[2]:
            raise DimensionMismatch(f"Weight LUT must have shape (K, V, V, N), got {tables.shape}.")
        if np.any(tables == -128):
            raise ValueError("Weight LUT entries must lie in [-127, 127].")
        if not self.scale > 0:
            raise ValueError(f"Weight LUT scale must be > 0, got {self.scale}.")
        tables.flags.writeable = False
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "scale", float(np.float32(self.scale)))

    @property
    def groups(self) -> int:
        return int(self.tables.shape[0])

    @property
    def levels(self) -> int:
        return int(self.tables.shape[1])

    @property
    def basis_count(self) -> int:
        return int(self.tables.shape[3])

    def dequantized(self) -> np.ndarray:
        return self.tables.astype(np.float64) * self.scale


@dataclass(frozen=True)
class LutBundle:
    """
    Everything pure-LUT inference needs.

    Attributes:
        config: Table shape of the baked model (see `ModelConfig.table_shape`).
        quant: Weight LUT index quantization.
        msb: Channel LUT of the MSB branch.
        lsb: Channel LUT of the LSB branch.
        weight_lut: Int8 split-FC tables.
        basis: (N, M, M, M, 3) float32 lattices.
    """

    config: ModelConfig
    quant: QuantSpec
    msb: ChannelLut
    lsb: ChannelLut
    weight_lut: WeightLut
    basis: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        basis = np.array(self.basis, dtype=np.float32, order="C")
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "config", self.config.table_shape())
        cfg = self.config
        if cfg.group_length != 2:
            raise UnsupportedGroupLength(
                f"Weight LUTs are two-dimensional; group length {cfg.group_length} is not supported."
            )
        for lut in (self.msb, self.lsb):
            if lut.channels != cfg.channels:
                raise DimensionMismatch(
                    f"{lut.tag} Channel LUT has {lut.channels} channels, expected {cfg.channels}."
                )
        expected = (cfg.groups, self.quant.levels, self.quant.levels, cfg.basis_count)
        if self.weight_lut.tables.shape != expected:
            raise DimensionMismatch(
                f"Weight LUT shape {self.weight_lut.tables.shape} != {expected}."
            )
        lattice = (cfg.basis_count,) + (cfg.bins,) * 3 + (3,)
        if basis.shape != lattice:
            raise DimensionMismatch(f"Basis shape {basis.shape} != {lattice}.")
        if not np.all(np.isfinite(basis)):
            raise ValueError("Basis lattices must be finite.")

    @property
    def scale(self) -> float:
        return self.weight_lut.scale

    @classmethod
    def identity(cls, config: ModelConfig, quant: QuantSpec) -> "LutBundle":
        """A bundle whose weights are e_0 for every image and whose basis 0 is the identity."""
        zeros = np.zeros((CHANNEL_LUT_ENTRIES, config.channels), dtype=np.float32)
        tables = np.zeros(
            (config.groups, quant.levels, quant.levels, config.basis_count), dtype=np.int8
        )
        tables[0, :, :, 0] = 1
        basis = np.zeros((config.basis_count,) + (config.bins,) * 3 + (3,), dtype=np.float32)
        basis[0] = identity_table(config.bins)
        return cls(
            config, quant, ChannelLut("msb", zeros), ChannelLut("lsb", zeros),
            WeightLut(tables, 1.0), basis,
        )


# --- Baking ---


def nibble_grid() -> np.ndarray:
    """All 4096 nibble triples in Channel LUT row order, shape (4096, 3)."""
    return np.indices((NIBBLE_LEVELS,) * 3).reshape(3, -1).T


def build_channel_lut(branch: PointwiseBranch, tag: str) -> ChannelLut:
    """
    Enumerates a color-aware branch over all 16^3 nibble triples.

    Raises:
        UnsupportedVariant: If the branch does not read exactly one RGB pixel.
    """
    if branch.in_width != 3:
        raise UnsupportedVariant(
            f"Only pointwise RGB branches can be tabulated (input width {branch.in_width})."
        )
    rows = nibble_grid() / float(NIBBLE_MAX)
    return ChannelLut(tag, branch.forward(rows).astype(np.float32))


def weight_lut_raw(head: SplitFC, q: QuantSpec) -> np.ndarray:
    """
    Exact group outputs at every quantized pair, shape (K, V, V, N).

    Raises:
        UnsupportedGroupLength: If the head's groups are not of length 2.
    """
    if head.group_length != 2:
        raise UnsupportedGroupLength(
            f"Weight LUTs are two-dimensional; group length {head.group_length} is not supported."
        )
    grid = dequantize_index(np.arange(q.levels), q)
    first, second = np.meshgrid(grid, grid, indexing="ij")
    features = np.empty((q.levels, q.levels, head.in_width))
    features[..., 0::2] = first[..., None]
    features[..., 1::2] = second[..., None]
    return np.moveaxis(head.group_outputs(features), 2, 0)


def int8_scale(raw: np.ndarray) -> float:
    """max|raw| / 127 rounded to float32, or 1.0 for an all-zero table."""
    peak = float(np.max(np.abs(raw))) if raw.size else 0.0
    if peak == 0.0:
        return 1.0
    return float(np.float32(peak / INT8_LIMIT))


def build_weight_lut(head: SplitFC, q: QuantSpec) -> WeightLut:
    """
    Tabulates every split-FC group over the V x V quantized pairs.

    Entries are round(raw / s_w) clamped to [-127, 127], with one global
    symmetric scale s_w shared by all groups.

    Raises:
        UnsupportedGroupLength: If the group length is not 2.
    """
    raw = weight_lut_raw(head, q)
    scale = int8_scale(raw)
    stored = np.clip(np.rint(raw / scale), -INT8_LIMIT, INT8_LIMIT).astype(np.int8)
    return WeightLut(stored, scale)


def bake(model: TrainableModel, q: QuantSpec) -> LutBundle:
    """
    Converts a trained model into a LUT bundle.

    Raises:
        UnsupportedGroupLength: If the split-FC group length is not 2.
        UnsupportedVariant: If a branch is not a pointwise RGB branch pair.
    """
    cfg = model.config
    if not cfg.bakeable:
        raise UnsupportedVariant(
            f"Variant (branch_mode={cfg.branch_mode}, input_channels={cfg.input_channels}, "
            f"first_kernel={cfg.first_kernel}) has no lookup-table form."
        )
    if not all(np.all(np.isfinite(v)) for v in model.parameters().values()):
        raise ValueError("Cannot bake a model with non-finite parameters.")
    weight_lut = build_weight_lut(model.head, q)
    msb = build_channel_lut(model.branches[0], "msb")
    lsb = build_channel_lut(model.branches[1], "lsb")
    logger.debug(
        "Baked bundle: C=%d K=%d V=%d N=%d s_w=%g", cfg.channels, cfg.groups, q.levels,
        cfg.basis_count, weight_lut.scale,
    )
    return LutBundle(cfg, q, msb, lsb, weight_lut, model.basis.astype(np.float32))


# --- Storage accounting ---


def naive_lut_size(rf_k: int, channels: int) -> int:
    """Bytes of a LUT indexed by every 8-bit input in a k x k x C receptive field."""
    if rf_k < 1 or channels < 1:
        raise PreconditionError("Receptive field and channel count must be >= 1.")
    return 256 ** (rf_k * rf_k * channels)


def weight_lut_storage(groups: int, group_length: int, levels: int, basis_count: int) -> int:
    """Bytes of K int8 tables of V^L cells by N weights."""
    return groups * levels ** group_length * basis_count


def full_fc_lut_size(channels: int, levels: int, basis_count: int) -> int:
    """Bytes of a single int8 table indexed by all C quantized features."""
    return levels ** channels * basis_count


def channel_lut_storage(channels: int, branch_mode: str = "parallel") -> int:
    """Float32 bytes of the Channel LUTs: two 16^3 tables, or one 256^3 table."""
    if branch_mode == "parallel":
        return 2 * CHANNEL_LUT_ENTRIES * channels * 4
    return 256 ** 3 * channels * 4


def basis_storage(basis_count: int, bins: int) -> int:
    return basis_count * bins ** 3 * 3 * 4


@dataclass
class StorageReport:
    """Per-section byte counts of a bundle."""

    channel_lut_bytes: int
    weight_lut_bytes: int
    basis_bytes: int
    full_fc_bytes: int
    notes: List[str] = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return self.channel_lut_bytes + self.weight_lut_bytes + self.basis_bytes

    def to_dict(self) -> Dict[str, object]:
        return {
            "channel_lut_bytes": self.channel_lut_bytes,
            "weight_lut_bytes": self.weight_lut_bytes,
            "basis_bytes": self.basis_bytes,
            "total_bytes": self.total_bytes,
            "full_fc_bytes": self.full_fc_bytes,
            "notes": list(self.notes),
        }


def bundle_storage(bundle: LutBundle) -> StorageReport:
    """Table sizes of a bundle, with the unsplit-FC size for comparison."""
    cfg = bundle.config
    levels = bundle.quant.levels
    return StorageReport(
        channel_lut_bytes=channel_lut_storage(cfg.channels),
        weight_lut_bytes=weight_lut_storage(cfg.groups, cfg.group_length, levels, cfg.basis_count),
        basis_bytes=basis_storage(cfg.basis_count, cfg.bins),
        full_fc_bytes=full_fc_lut_size(cfg.channels, levels, cfg.basis_count),
        notes=[
            "Channel LUT bytes count float32 entries of both branches "
            f"({channel_lut_storage(cfg.channels) / 2 ** 20:.2f} MiB).",
        ],
    )
