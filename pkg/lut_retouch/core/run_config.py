# lut_retouch/core/run_config.py

"""
JSON run configurations with command-line overrides.

A run config is a JSON object with one optional section per command:

    {
      "train": {"input_dir": "data/input", "target_dir": "data/target", "epochs": 50},
      "bake": {"delta_s": 2.0, "offset": 16.0}
    }

Values resolve in order: command-line flag, config file, built-in default.
Unknown sections and keys are rejected so typos fail loudly.
"""

import json
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Optional, Tuple, Type, TypeVar

from .config import (
    DEFAULT_BASIS_COUNT,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BENCH_REPEATS,
    DEFAULT_BENCH_WARMUP,
    DEFAULT_CHANNELS,
    DEFAULT_DELTA_S,
    DEFAULT_EPOCHS,
    DEFAULT_GROUP_LENGTH,
    DEFAULT_GROUPS,
    DEFAULT_LATTICE_BINS,
    DEFAULT_LAYER_WIDTHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_OFFSET_R,
    DEFAULT_SEED,
    DEFAULT_TRAIN_RESOLUTION,
    DEFAULT_WORKING_SIZE,
    ModelConfig,
    QuantSpec,
    TrainConfig,
)
from .errors import ConfigError, IoFailure

S = TypeVar("S")


@dataclass(frozen=True)
class TrainSection:
    input_dir: Optional[str] = None
    target_dir: Optional[str] = None
    out: str = "model.icemdl"
    loss_csv: Optional[str] = None
    epochs: int = DEFAULT_EPOCHS
    steps: Optional[int] = None
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = DEFAULT_SEED
    channels: int = DEFAULT_CHANNELS
    groups: int = DEFAULT_GROUPS
    group_length: int = DEFAULT_GROUP_LENGTH
    basis: int = DEFAULT_BASIS_COUNT
    bins: int = DEFAULT_LATTICE_BINS
    layer_widths: Tuple[int, ...] = DEFAULT_LAYER_WIDTHS
    working_size: int = DEFAULT_TRAIN_RESOLUTION
    branch_mode: str = "parallel"
    input_channels: int = 3
    first_kernel: int = 1
    head_mode: str = "split"

    def model_config(self) -> ModelConfig:
        if self.head_mode == "full":
            return ModelConfig.full_fc(
                channels=self.channels,
                basis_count=self.basis,
                bins=self.bins,
                layer_widths=self.layer_widths,
                train_resolution=self.working_size,
                branch_mode=self.branch_mode,
                input_channels=self.input_channels,
                first_kernel=self.first_kernel,
            )
        return ModelConfig(
            channels=self.channels,
            groups=self.groups,
            group_length=self.group_length,
            basis_count=self.basis,
            bins=self.bins,
            layer_widths=self.layer_widths,
            train_resolution=self.working_size,
            branch_mode=self.branch_mode,
            input_channels=self.input_channels,
            first_kernel=self.first_kernel,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
            max_steps=self.steps,
        )


@dataclass(frozen=True)
class BakeSection:
    checkpoint: Optional[str] = None
    out: str = "model.icelut"
    delta_s: float = DEFAULT_DELTA_S
    offset: float = DEFAULT_OFFSET_R

    def quant(self) -> QuantSpec:
        return QuantSpec(delta_s=self.delta_s, offset=self.offset)


@dataclass(frozen=True)
class RetouchSection:
    bundle: Optional[str] = None
    input_dir: Optional[str] = None
    out_dir: Optional[str] = None
    target_dir: Optional[str] = None
    metrics_csv: Optional[str] = None
    working_size: int = DEFAULT_WORKING_SIZE
    threads: Optional[int] = None


@dataclass(frozen=True)
class VerifySection:
    checkpoint: Optional[str] = None
    bundle: Optional[str] = None
    images: Optional[str] = None
    working_size: int = DEFAULT_WORKING_SIZE


@dataclass(frozen=True)
class BenchSection:
    bundle: Optional[str] = None
    images: Optional[str] = None
    repeats: int = DEFAULT_BENCH_REPEATS
    warmup: int = DEFAULT_BENCH_WARMUP
    compare_checkpoint: Optional[str] = None
    threads: int = 1
    working_size: int = DEFAULT_WORKING_SIZE


@dataclass(frozen=True)
class MetricsSection:
    pred_dir: Optional[str] = None
    target_dir: Optional[str] = None
    csv: Optional[str] = None


@dataclass(frozen=True)
class SynthSection:
    out_dir: Optional[str] = None
    count: int = 50
    size: int = 64
    transform: str = "gamma-mix"
    seed: int = DEFAULT_SEED


SECTIONS: Dict[str, type] = {
    "train": TrainSection,
    "bake": BakeSection,
    "retouch": RetouchSection,
    "verify": VerifySection,
    "bench": BenchSection,
    "metrics": MetricsSection,
    "synth": SynthSection,
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed run config: raw key/value overrides per command section."""

    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.sections.get(name, {}))


def _coerce(section: str, name: str, value: Any, default: Any) -> Any:
    if name == "layer_widths":
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) for v in value):
            raise ConfigError(f"{section}.{name} must be a list of integers.")
        return tuple(value)
    if value is None or default is None:
        return value
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{section}.{name} has an invalid value {value!r}.")
    if isinstance(default, int) and not isinstance(value, int):
        raise ConfigError(f"{section}.{name} must be an integer, got {value!r}.")
    if isinstance(default, float):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{name} must be a number, got {value!r}.")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{section}.{name} must be a string, got {value!r}.")
    return value


def parse_run_config(document: Dict[str, Any]) -> RunConfig:
    """
    Validates a decoded JSON document.

    Raises:
        ConfigError: On unknown sections or keys, or values of the wrong type.
    """
    if not isinstance(document, dict):
        raise ConfigError("A run config must be a JSON object.")
    sections: Dict[str, Dict[str, Any]] = {}
    for name, values in document.items():
        if name not in SECTIONS:
            raise ConfigError(f"Unknown run config section '{name}'. Known: {', '.join(SECTIONS)}.")
        if not isinstance(values, dict):
            raise ConfigError(f"Section '{name}' must be a JSON object.")
        known = {f.name: f.default for f in fields(SECTIONS[name])}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"Unknown key(s) in section '{name}': {', '.join(unknown)}.")
        sections[name] = {
            key: _coerce(name, key, value, known[key]) for key, value in values.items()
        }
    return RunConfig(sections)


def load_run_config(path: str) -> RunConfig:
    """
    Reads and validates a JSON run config file.

    Raises:
        IoFailure: If the file cannot be read.
        ConfigError: If it is not valid JSON or fails validation.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise IoFailure(f"Cannot read run config '{path}': {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Run config '{path}' is not valid JSON: {e}") from e
    return parse_run_config(document)


def merge_overrides(section_cls: Type[S], run_config: Optional[RunConfig], name: str, overrides: Any) -> S:
    """
    Builds a section from defaults, the run config, then explicit flags.

    Args:
        section_cls: Section dataclass.
        run_config: Parsed config file, or None.
        name: Section name in the config file.
        overrides: Object (e.g. argparse.Namespace) whose non-None attributes
            matching section fields win over the file.
    """
    section = section_cls()
    if run_config is not None:
        section = replace(section, **run_config.section(name))  # type: ignore[type-var]
    flags = {
        f.name: getattr(overrides, f.name)
        for f in fields(section_cls)  # type: ignore[arg-type]
        if getattr(overrides, f.name, None) is not None
    }
    if "layer_widths" in flags:
        flags["layer_widths"] = tuple(flags["layer_widths"])
    return replace(section, **flags)  # type: ignore[type-var]
