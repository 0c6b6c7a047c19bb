# lut_retouch/core/config.py

"""
Default configuration constants and typed configuration records.

This module defines the default values used throughout the application:
network hyperparameters, training schedule, Weight LUT quantization, file
formats and CLI exit codes. The dataclasses at the bottom (`ModelConfig`,
`TrainConfig`, `QuantSpec`) bundle these defaults into validated records;
command-line flags and JSON run configs override them.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

from .errors import ConfigError

# --- Network Configuration ---
DEFAULT_CHANNELS: int = 10
"""Pooled feature channels C produced by each pointwise branch."""

DEFAULT_GROUPS: int = 5
"""Number K of split-FC groups."""

DEFAULT_GROUP_LENGTH: int = 2
"""Length L of each split-FC group (C = K x L)."""

DEFAULT_BASIS_COUNT: int = 20
"""Number N of basis 3D LUTs combined by the predicted weights."""

DEFAULT_LATTICE_BINS: int = 17
"""Vertices M per color axis of every 3D lattice."""

DEFAULT_LAYER_WIDTHS: Tuple[int, ...] = (32, 64, 128, 64, 32)
"""Hidden widths of each branch; with the C-wide output layer this gives six 1x1 layers."""

DEFAULT_TRAIN_RESOLUTION: int = 32
"""Side of the downsampled working image the weight predictor sees."""

BRANCH_MODES: Tuple[str, ...] = ("parallel", "single")
"""'parallel' splits bytes into MSB/LSB nibble branches; 'single' feeds whole bytes to one branch."""

HEAD_MODES: Tuple[str, ...] = ("split", "full")
"""'split' is the grouped FC head; 'full' is a vanilla FC (one group of length C)."""

HEAD_INIT_STD: float = 1e-3
"""Standard deviation of the initial split-FC weights."""

# --- Training Configuration ---
DEFAULT_EPOCHS: int = 400
"""Passes over the paired dataset."""

DEFAULT_LEARNING_RATE: float = 1e-4
"""Fixed Adam learning rate."""

DEFAULT_BATCH_SIZE: int = 1
"""Pairs whose gradients are averaged per optimizer step."""

DEFAULT_SEED: int = 0
"""Seed for parameter initialization and epoch shuffling."""

ADAM_BETA1: float = 0.9
ADAM_BETA2: float = 0.999
ADAM_EPSILON: float = 1e-8

DEFAULT_LOG_EVERY: int = 50
"""Steps between debug log lines during training."""

# --- Weight LUT Quantization ---
DEFAULT_DELTA_S: float = 2.0
"""Sampling interval of pooled features before Weight LUT indexing."""

DEFAULT_OFFSET_R: float = 16.0
"""Offset R; quantized features live in [-R, R - 1/delta_s]."""

INT8_LIMIT: int = 127
"""Symmetric INT8 range used by Weight LUT entries."""

NIBBLE_LEVELS: int = 16
"""Distinct values of a 4-bit plane."""

CHANNEL_LUT_ENTRIES: int = NIBBLE_LEVELS ** 3
"""Rows of a Channel LUT, indexed by r*256 + g*16 + b."""

# --- Inference ---
DEFAULT_WORKING_SIZE: int = 32
"""Side of the working image used for LUT weight prediction."""

DEFAULT_BENCH_REPEATS: int = 5
DEFAULT_BENCH_WARMUP: int = 1

THREADS_ENV_VAR: str = "ICELUT_THREADS"
"""Environment variable capping worker threads."""

# --- Metrics ---
SSIM_WINDOW: int = 11
SSIM_SIGMA: float = 1.5
SSIM_K1: float = 0.01
SSIM_K2: float = 0.03

# --- File Formats ---
MODEL_MAGIC: bytes = b"ICEMDL01"
"""First eight bytes of a model checkpoint."""

BUNDLE_MAGIC: bytes = b"ICELUT01"
"""First eight bytes of a LUT bundle."""

BUNDLE_VERSION: int = 1

IMAGE_EXTENSIONS: Tuple[str, ...] = (".png", ".ppm")
"""File suffixes picked up when scanning image directories."""

INPUT_SUBDIR: str = "input"
TARGET_SUBDIR: str = "target"

# --- CLI Exit Codes ---
EXIT_OK: int = 0
EXIT_UNEXPECTED: int = 1
EXIT_CONFIG: int = 2
EXIT_DATASET: int = 3
EXIT_CHECKPOINT: int = 4
EXIT_BUNDLE: int = 5
EXIT_VERIFY: int = 6
EXIT_INTERRUPTED: int = 130


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of a trainable retouching model.

    Attributes:
        channels: Pooled feature width C.
        groups: Split-FC group count K.
        group_length: Split-FC group length L.
        basis_count: Number N of basis lattices.
        bins: Lattice vertices M per axis.
        layer_widths: Hidden widths of each branch (output layer excluded).
        train_resolution: Working-image side used during training.
        branch_mode: One of `BRANCH_MODES`.
        input_channels: 3 for color-aware branches, 1 for per-channel branches.
        first_kernel: Spatial size of the first branch layer (1 or 3).
        head_mode: One of `HEAD_MODES`.
    """

    channels: int = DEFAULT_CHANNELS
    groups: int = DEFAULT_GROUPS
    group_length: int = DEFAULT_GROUP_LENGTH
    basis_count: int = DEFAULT_BASIS_COUNT
    bins: int = DEFAULT_LATTICE_BINS
    layer_widths: Tuple[int, ...] = field(default=DEFAULT_LAYER_WIDTHS)
    train_resolution: int = DEFAULT_TRAIN_RESOLUTION
    branch_mode: str = "parallel"
    input_channels: int = 3
    first_kernel: int = 1
    head_mode: str = "split"

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        self.validate()

    def validate(self) -> None:
        """
        Checks the architecture invariants.

        Raises:
            ConfigError: If any field is out of range or C != K x L.
        """
        if self.channels < 1 or self.groups < 1 or self.group_length < 1:
            raise ConfigError("channels, groups and group_length must be >= 1.")
        if self.channels != self.groups * self.group_length:
            raise ConfigError(
                f"channels ({self.channels}) must equal groups x group_length "
                f"({self.groups} x {self.group_length})."
            )
        if self.basis_count < 1:
            raise ConfigError("basis_count must be >= 1.")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2.")
        if any(w < 1 for w in self.layer_widths):
            raise ConfigError("layer widths must be positive.")
        if self.train_resolution < 1:
            raise ConfigError("train_resolution must be >= 1.")
        if self.branch_mode not in BRANCH_MODES:
            raise ConfigError(f"branch_mode must be one of {BRANCH_MODES}, got '{self.branch_mode}'.")
        if self.input_channels not in (1, 3):
            raise ConfigError("input_channels must be 1 or 3.")
        if self.first_kernel not in (1, 3):
            raise ConfigError("first_kernel must be 1 or 3.")
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode must be one of {HEAD_MODES}, got '{self.head_mode}'.")
        if self.head_mode == "full" and self.groups != 1:
            raise ConfigError("head_mode 'full' requires a single group of length C.")

    @property
    def layer_count(self) -> int:
        """Number of weight layers per branch, output layer included."""
        return len(self.layer_widths) + 1

    @property
    def branch_count(self) -> int:
        return 2 if self.branch_mode == "parallel" else 1

    @property
    def bakeable(self) -> bool:
        """True when every branch and the head have a lookup-table form."""
        return (
            self.branch_mode == "parallel"
            and self.input_channels == 3
            and self.first_kernel == 1
        )

    def table_shape(self) -> "ModelConfig":
        """
        The fields a LUT bundle records (C, K, L, N, M); the rest keep their defaults.

        Branch widths and the training resolution have no counterpart once the
        branches are tabulated, so a bundle cannot report them.
        """
        return ModelConfig(
            channels=self.channels,
            groups=self.groups,
            group_length=self.group_length,
            basis_count=self.basis_count,
            bins=self.bins,
        )

    @classmethod
    def full_fc(cls, channels: int = DEFAULT_CHANNELS, **kwargs) -> "ModelConfig":
        """Builds a config whose head is one vanilla FC over all C channels."""
        return cls(channels=channels, groups=1, group_length=channels, head_mode="full", **kwargs)


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer schedule.

    Attributes:
        epochs: Passes over the dataset (>= 1).
        learning_rate: Adam step size (> 0).
        batch_size: Pairs averaged per step.
        seed: Seed for initialization and shuffling.
        beta1, beta2, epsilon: Adam moment parameters.
        max_steps: Optional cap on optimizer steps (overrides the epoch count
            when reached first).
        log_every: Steps between debug log lines.
    """

    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = DEFAULT_SEED
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON
    max_steps: Optional[int] = None
    log_every: int = DEFAULT_LOG_EVERY

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ConfigError: On a non-positive epoch count, learning rate or batch size.
        """
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}.")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}.")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}.")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}.")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.epsilon > 0):
            raise ConfigError("Adam moments must satisfy 0 <= beta < 1 and epsilon > 0.")


@dataclass(frozen=True)
class QuantSpec:
    """
    Weight LUT index quantization.

    Attributes:
        delta_s: Sampling interval; features are floored onto a 1/delta_s grid.
        offset: Offset R; the grid spans [-R, R - 1/delta_s].
    """

    delta_s: float = DEFAULT_DELTA_S
    offset: float = DEFAULT_OFFSET_R

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """
        Raises:
            ConfigError: If delta_s or R is not positive or 2*R*delta_s is not an integer.
        """
        if not (self.delta_s > 0 and self.offset > 0):
            raise ConfigError("delta_s and offset R must be > 0.")
        raw = 2.0 * self.offset * self.delta_s
        if abs(raw - round(raw)) > 1e-9 or round(raw) < 1:
            raise ConfigError(
                f"2 * R * delta_s must be a positive integer, got {raw} "
                f"(R={self.offset}, delta_s={self.delta_s})."
            )

    @property
    def levels(self) -> int:
        """Index values V per Weight LUT dimension."""
        return int(round(2.0 * self.offset * self.delta_s))
