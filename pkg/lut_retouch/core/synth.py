# lut_retouch/core/synth.py

"""
Synthetic paired datasets for desk-scale experiments.

Inputs are smooth random-noise images: a coarse random colour grid
bilinearly upsampled to the target size. Targets are the inputs passed
through a fixed analytic colour map. Everything is a pure function of the
seed.
"""

import logging
import os
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from .config import INPUT_SUBDIR, TARGET_SUBDIR
from .errors import ConfigError, IoFailure
from .imaging import ImageU8, resize_unit, save_image, unit_to_u8

logger = logging.getLogger(__name__)

ColorMap = Callable[[np.ndarray], np.ndarray]

CHANNEL_MIX = np.array(
    [
        [0.85, 0.10, 0.05],
        [0.05, 0.90, 0.05],
        [0.05, 0.15, 0.80],
    ]
)
"""Rows sum to one, so grey stays grey."""

WARM_GAIN = np.array([1.08, 1.0, 0.88])
WARM_LIFT = np.array([0.02, 0.01, 0.0])

GAMMA_MIX_GAMMA = 0.8

NOISE_GRID = 4
"""Side of the random colour grid upsampled into each synthetic input."""


def _gamma(value: float) -> ColorMap:
    def apply(unit: np.ndarray) -> np.ndarray:
        return np.power(unit, value)

    return apply


def _channel_mix(unit: np.ndarray) -> np.ndarray:
    return unit @ CHANNEL_MIX.T


def _warm_tone(unit: np.ndarray) -> np.ndarray:
    return unit * WARM_GAIN + WARM_LIFT


def _gamma_mix(unit: np.ndarray) -> np.ndarray:
    return _channel_mix(np.power(unit, GAMMA_MIX_GAMMA))


def _swap(unit: np.ndarray) -> np.ndarray:
    # Reddish images get their red and blue channels exchanged; others pass
    # through. The target depends on the joint colour statistics.
    if unit[..., 0].mean() > unit[..., 2].mean():
        return unit[..., ::-1]
    return unit


TRANSFORMS: Dict[str, ColorMap] = {
    "channel-mix": _channel_mix,
    "warm-tone": _warm_tone,
    "gamma-mix": _gamma_mix,
    "swap": _swap,
}


def parse_transform(name: str) -> ColorMap:
    """
    Resolves a transform name: `gamma:<value>` or one of `TRANSFORMS`.

    Raises:
        ConfigError: For unknown names or a non-positive gamma.
    """
    if name.startswith("gamma:"):
        try:
            value = float(name.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"Invalid gamma in transform '{name}'.") from None
        if not value > 0:
            raise ConfigError(f"Gamma must be > 0, got {value}.")
        return _gamma(value)
    if name not in TRANSFORMS:
        known = ", ".join(["gamma:<value>"] + sorted(TRANSFORMS))
        raise ConfigError(f"Unknown transform '{name}'. Known transforms: {known}.")
    return TRANSFORMS[name]


def apply_transform(img: ImageU8, transform: ColorMap) -> ImageU8:
    return ImageU8(unit_to_u8(transform(img.to_unit())))


def smooth_noise_image(rng: np.random.Generator, width: int, height: int) -> ImageU8:
    """A random colour grid upsampled to width x height."""
    grid = rng.random((NOISE_GRID, NOISE_GRID, 3))
    return ImageU8(unit_to_u8(resize_unit(grid, width, height)))


def synth_pairs(count: int, size: int, transform: str, seed: int = 0) -> List[Tuple[ImageU8, ImageU8]]:
    """
    Generates `count` (input, target) pairs in memory.

    Raises:
        ConfigError: For a bad transform, count or size.
    """
    if count < 1 or size < 1:
        raise ConfigError(f"count and size must be >= 1, got {count} and {size}.")
    color_map = parse_transform(transform)
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        source = smooth_noise_image(rng, size, size)
        pairs.append((source, apply_transform(source, color_map)))
    return pairs


@dataclass
class SynthResult:
    input_dir: str
    target_dir: str
    names: List[str]


def write_synth_dataset(
    out_dir: str, count: int, size: int, transform: str, seed: int = 0
) -> SynthResult:
    """
    Writes a paired dataset as `out_dir/input/NNNN.png` and `out_dir/target/NNNN.png`.

    Raises:
        ConfigError: For a bad transform, count or size.
        IoFailure: If files cannot be written.
    """
    pairs = synth_pairs(count, size, transform, seed)
    input_dir = os.path.join(out_dir, INPUT_SUBDIR)
    target_dir = os.path.join(out_dir, TARGET_SUBDIR)
    try:
        os.makedirs(input_dir, exist_ok=True)
        os.makedirs(target_dir, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"Cannot create dataset directories under '{out_dir}': {e}") from e
    names = []
    for index, (source, target) in enumerate(pairs):
        name = f"{index:04d}.png"
        save_image(source, os.path.join(input_dir, name))
        save_image(target, os.path.join(target_dir, name))
        names.append(name)
    logger.info("Wrote %d '%s' pairs to '%s'.", count, transform, out_dir)
    return SynthResult(input_dir, target_dir, names)
