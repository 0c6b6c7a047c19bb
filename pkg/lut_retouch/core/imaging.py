# lut_retouch/core/imaging.py

"""
Image records and raster operations shared by every pipeline stage.

Images are held as numpy arrays of shape (height, width, 3), which is the
row-major interleaved R,G,B layout of the on-disk rasters. PNG goes through
Pillow; binary PPM (P6, maxval 255) is parsed here because its contract is
stricter than Pillow's reader (16-bit maxval must be an error).
"""

import logging
import os
import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptFile, InvalidBins, IoFailure, UnsupportedFormat

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PPM_SIGNATURE = b"P6"
_PNG_BIT_DEPTH_OFFSET = 24
_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


@dataclass(frozen=True)
class ImageU8:
    """
    An 8-bit sRGB raster.

    Attributes:
        data: uint8 array of shape (height, width, 3).
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.array(self.data, copy=True, order="C")
        if data.dtype != np.uint8:
            raise ValueError(f"ImageU8 needs uint8 samples, got {data.dtype}.")
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"ImageU8 needs shape (H, W, 3), got {data.shape}.")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("ImageU8 needs width >= 1 and height >= 1.")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_bytes(cls, width: int, height: int, payload: bytes) -> "ImageU8":
        """Builds an image from row-major interleaved R,G,B bytes."""
        if len(payload) != width * height * 3:
            raise ValueError(
                f"Expected {width * height * 3} bytes for {width}x{height}, got {len(payload)}."
            )
        arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
        return cls(arr.copy())

    @classmethod
    def filled(cls, width: int, height: int, rgb: Tuple[int, int, int]) -> "ImageU8":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[...] = np.asarray(rgb, dtype=np.uint8)
        return cls(arr)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def to_bytes(self) -> bytes:
        return self.data.tobytes()

    def to_unit(self) -> np.ndarray:
        """Returns float64 samples scaled to [0, 1]."""
        return self.data.astype(np.float64) / 255.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageU8):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self) -> int:
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"ImageU8(width={self.width}, height={self.height})"


@dataclass(frozen=True)
class ImageF32:
    """
    A floating-point raster with samples clamped to [0, 1] on creation.

    Attributes:
        data: float32 array of shape (height, width, 3).
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"ImageF32 needs shape (H, W, 3), got {data.shape}.")
        if not np.all(np.isfinite(data)):
            raise ValueError("ImageF32 samples must be finite.")
        clamped = np.clip(data, 0.0, 1.0).astype(np.float32)
        clamped.setflags(write=False)
        object.__setattr__(self, "data", clamped)

    @classmethod
    def from_u8(cls, img: ImageU8) -> "ImageF32":
        return cls(img.to_unit())

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def to_u8(self) -> ImageU8:
        """Rounds half-up to the nearest byte."""
        return ImageU8(unit_to_u8(self.data))

    def __repr__(self) -> str:
        return f"ImageF32(width={self.width}, height={self.height})"


@dataclass(frozen=True)
class BitPlanePair:
    """
    High and low nibbles of every sample of an ImageU8.

    Attributes:
        msb: uint8 array (H, W, 3) holding byte >> 4.
        lsb: uint8 array (H, W, 3) holding byte & 15.
    """

    msb: np.ndarray
    lsb: np.ndarray

    def reconstruct(self) -> ImageU8:
        """Recombines msb * 16 + lsb into the source image."""
        return ImageU8((self.msb.astype(np.uint16) * 16 + self.lsb).astype(np.uint8))


def unit_to_u8(values: np.ndarray) -> np.ndarray:
    """Maps [0, 1] samples to bytes, rounding half-up and clamping."""
    scaled = np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5)
    return scaled.astype(np.uint8)


# --- I/O ---


def load_image(path: str) -> ImageU8:
    """
    Loads an 8-bit RGB image from a PNG or binary PPM (P6) file.

    The format is detected from the file signature, not the suffix. PNG alpha
    is dropped with a warning; grayscale and palette PNGs are expanded to RGB.

    Args:
        path: File to read.

    Returns:
        The decoded ImageU8.

    Raises:
        IoFailure: If the file cannot be read.
        UnsupportedFormat: For other formats and for 16-bit sources.
        CorruptFile: For malformed PPM headers or truncated pixel data.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoFailure(f"Could not read image '{path}': {e}") from e

    if raw.startswith(PPM_SIGNATURE):
        return _decode_ppm(raw, path)
    if raw.startswith(PNG_SIGNATURE):
        return _decode_png(raw, path)
    raise UnsupportedFormat(f"'{path}' is neither PNG nor binary PPM (P6).")


def _decode_ppm(raw: bytes, path: str) -> ImageU8:
    tokens = []
    pos = len(PPM_SIGNATURE)
    for _ in range(3):
        match = _PPM_TOKEN.match(raw, pos)
        if match is None:
            raise CorruptFile(f"Truncated PPM header in '{path}'.")
        tokens.append(match.group(1))
        pos = match.end()
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as e:
        raise CorruptFile(f"Non-numeric PPM header field in '{path}'.") from e
    if width < 1 or height < 1:
        raise CorruptFile(f"PPM '{path}' declares an empty raster ({width}x{height}).")
    if maxval > 255:
        raise UnsupportedFormat(f"PPM '{path}' has maxval {maxval}; 16-bit sources are not supported.")
    if maxval != 255:
        raise UnsupportedFormat(f"PPM '{path}' has maxval {maxval}; only 255 is supported.")
    # Exactly one whitespace byte separates maxval from the raster.
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise CorruptFile(f"Truncated PPM header in '{path}'.")
    pos += 1
    expected = width * height * 3
    payload = raw[pos:pos + expected]
    if len(payload) != expected:
        raise CorruptFile(
            f"PPM '{path}' holds {len(payload)} raster bytes, expected {expected}."
        )
    return ImageU8.from_bytes(width, height, payload)


def _decode_png(raw: bytes, path: str) -> ImageU8:
    if len(raw) > _PNG_BIT_DEPTH_OFFSET and raw[_PNG_BIT_DEPTH_OFFSET] == 16:
        raise UnsupportedFormat(f"PNG '{path}' is 16-bit; only 8-bit sources are supported.")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("RGBA", "LA", "PA") or (mode == "P" and "transparency" in im.info):
                logger.warning("Dropping alpha channel of '%s'.", path)
            if mode in ("I", "I;16", "I;16B", "F"):
                raise UnsupportedFormat(f"PNG '{path}' has unsupported mode '{mode}'.")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError, EOFError, ValueError) as e:
        raise CorruptFile(f"Could not decode PNG '{path}': {e}") from e
    except OSError as e:
        raise CorruptFile(f"Could not decode PNG '{path}': {e}") from e
    return ImageU8(arr.copy())


def save_image(img: ImageU8, path: str) -> None:
    """
    Writes an image losslessly: binary PPM for a '.ppm' suffix, PNG otherwise.

    Args:
        img: The image to write.
        path: Destination file; its parent directory must exist.

    Raises:
        IoFailure: If the parent directory is missing or the write fails.
    """
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise IoFailure(f"Directory '{parent}' does not exist.")
    try:
        if path.lower().endswith(".ppm"):
            header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
            with open(path, "wb") as f:
                f.write(header)
                f.write(img.to_bytes())
        else:
            Image.fromarray(img.data.copy()).save(path, format="PNG")
    except OSError as e:
        raise IoFailure(f"Could not write image '{path}': {e}") from e


# --- Resampling ---


def _axis_taps(in_size: int, out_size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # align_corners=False: output sample centres map onto input sample centres.
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def resize_unit(values: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinearly resamples a float (H, W, C) array to (out_h, out_w, C)."""
    in_h, in_w = values.shape[:2]
    if (in_w, in_h) == (out_w, out_h):
        return values.copy()
    y0, y1, fy = _axis_taps(in_h, out_h)
    x0, x1, fx = _axis_taps(in_w, out_w)
    fy = fy[:, None, None]
    rows = values[y0] * (1.0 - fy) + values[y1] * fy
    fx = fx[None, :, None]
    return rows[:, x0] * (1.0 - fx) + rows[:, x1] * fx


def bilinear_downsample(img: ImageU8, out_w: int, out_h: int) -> ImageU8:
    """
    Resamples an image with align-corners-false bilinear interpolation.

    Works for any target size (upsampling included); the result is rounded
    half-up to the nearest byte. A target equal to the source size returns
    the source unchanged.

    Args:
        img: Source image.
        out_w: Target width (>= 1).
        out_h: Target height (>= 1).

    Returns:
        The resampled ImageU8.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"Target size must be >= 1, got {out_w}x{out_h}.")
    if (img.width, img.height) == (out_w, out_h):
        return img
    values = resize_unit(img.data.astype(np.float64), out_w, out_h)
    return ImageU8(np.floor(values + 0.5).clip(0, 255).astype(np.uint8))


# --- Bit planes and histograms ---


def split_bitplanes(img: ImageU8) -> BitPlanePair:
    """Splits every byte into its high nibble (>> 4) and low nibble (& 15)."""
    data = img.data
    return BitPlanePair(msb=data >> 4, lsb=data & 0x0F)


def channel_histogram(img: ImageU8, bins: int) -> np.ndarray:
    """
    Computes the normalized per-channel histogram.

    Args:
        img: Source image.
        bins: Bin count; must divide 256.

    Returns:
        float64 array of shape (3, bins); each row sums to 1.

    Raises:
        InvalidBins: If bins does not divide 256.
    """
    if bins < 1 or 256 % bins != 0:
        raise InvalidBins(f"bins must divide 256, got {bins}.")
    width = 256 // bins
    flat = img.data.reshape(-1, 3) // width
    hist = np.stack(
        [np.bincount(flat[:, c], minlength=bins) for c in range(3)]
    ).astype(np.float64)
    return hist / img.pixel_count


def histogram_distance(a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance between two channel histograms of equal shape."""
    return float(np.abs(np.asarray(a) - np.asarray(b)).sum())
