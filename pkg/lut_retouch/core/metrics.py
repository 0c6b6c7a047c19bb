# lut_retouch/core/metrics.py

"""
Image quality metrics: PSNR, SSIM and CIELAB colour difference.

All metrics take two ImageU8 of equal size and are symmetric in their
arguments. SSIM is computed on BT.601 luma with an 11x11 Gaussian window;
colour difference is CIE76 Delta E averaged over pixels, using the sRGB D65
transfer and primaries.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, Sequence, Tuple, Union

import numpy as np
from skimage.metrics import structural_similarity

from .config import SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW
from .errors import DimensionMismatch, IoFailure, TooSmall
from .imaging import ImageU8, unit_to_u8

PEAK = 255.0

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)
# Reference white is the image of RGB (1, 1, 1), so white maps to a* = b* = 0.
WHITE_POINT = SRGB_TO_XYZ.sum(axis=1)

LAB_EPSILON = 216.0 / 24389.0
LAB_KAPPA = 24389.0 / 27.0

ColorInput = Union[ImageU8, np.ndarray]


def _check_same_size(a: ImageU8, b: ImageU8) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(
            f"Cannot compare {a.width}x{a.height} with {b.width}x{b.height}."
        )


# --- PSNR ---


def psnr(a: ImageU8, b: ImageU8) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    _check_same_size(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(PEAK) - 10.0 * math.log10(mse)


# --- SSIM ---


def luma(img: ImageU8) -> np.ndarray:
    """BT.601 luma on the 0..255 scale, shape (H, W)."""
    return img.data.astype(np.float64) @ LUMA_WEIGHTS


def ssim(a: ImageU8, b: ImageU8) -> float:
    """
    Single-scale SSIM on luma, averaged over all full windows.

    Raises:
        DimensionMismatch: If the images differ in size.
        TooSmall: If either side is shorter than the 11-pixel window.
    """
    _check_same_size(a, b)
    if min(a.width, a.height) < SSIM_WINDOW:
        raise TooSmall(
            f"SSIM needs both sides >= {SSIM_WINDOW}, got {a.width}x{a.height}."
        )
    # Gaussian weights with sigma 1.5 give the 11x11 window; the mean covers
    # only windows that lie fully inside the image.
    return float(
        structural_similarity(
            luma(a),
            luma(b),
            data_range=PEAK,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            K1=SSIM_K1,
            K2=SSIM_K2,
        )
    )


# --- CIELAB ---


def _as_unit(values: ColorInput) -> np.ndarray:
    if isinstance(values, ImageU8):
        return values.to_unit()
    return np.asarray(values, dtype=np.float64)


def srgb_to_linear(unit: np.ndarray) -> np.ndarray:
    return np.where(unit <= 0.04045, unit / 12.92, ((unit + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(linear: np.ndarray) -> np.ndarray:
    linear = np.clip(linear, 0.0, None)
    return np.where(linear <= 0.0031308, linear * 12.92, 1.055 * linear ** (1.0 / 2.4) - 0.055)


def srgb_to_lab(values: ColorInput) -> np.ndarray:
    """
    Converts sRGB to CIELAB (D65).

    Args:
        values: An ImageU8, or an (..., 3) array of sRGB samples in [0, 1].

    Returns:
        (..., 3) array of L*, a*, b*.
    """
    xyz = srgb_to_linear(_as_unit(values)) @ SRGB_TO_XYZ.T
    t = xyz / WHITE_POINT
    f = np.where(t > LAB_EPSILON, np.cbrt(t), (LAB_KAPPA * t + 16.0) / 116.0)
    lightness = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([lightness, a, b], axis=-1)


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of `srgb_to_lab`; returns (..., 3) sRGB samples clipped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    cube = f ** 3
    t = np.where(cube > LAB_EPSILON, cube, (116.0 * f - 16.0) / LAB_KAPPA)
    xyz = t * WHITE_POINT
    return np.clip(linear_to_srgb(xyz @ XYZ_TO_SRGB.T), 0.0, 1.0)


def lab_to_image(lab: np.ndarray) -> ImageU8:
    """Converts an (H, W, 3) Lab array back to bytes."""
    return ImageU8(unit_to_u8(lab_to_srgb(lab)))


def delta_e(a: ImageU8, b: ImageU8) -> float:
    """Mean CIE76 colour difference over all pixels."""
    _check_same_size(a, b)
    diff = srgb_to_lab(a) - srgb_to_lab(b)
    return float(np.sqrt((diff * diff).sum(axis=-1)).mean())


# --- Reports ---


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    delta_e: float

    def to_dict(self) -> Dict[str, object]:
        # JSON has no infinity; identical images report psnr as the string "inf".
        data: Dict[str, object] = asdict(self)
        if math.isinf(self.psnr):
            data["psnr"] = "inf"
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate(a: ImageU8, b: ImageU8) -> MetricReport:
    """Computes all three metrics for one image pair."""
    return MetricReport(psnr=psnr(a, b), ssim=ssim(a, b), delta_e=delta_e(a, b))


def mean_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Average of several reports; PSNR is +inf only if every pair was identical."""
    if not reports:
        raise ValueError("Cannot average an empty list of metric reports.")
    return MetricReport(
        psnr=float(np.mean([r.psnr for r in reports])),
        ssim=float(np.mean([r.ssim for r in reports])),
        delta_e=float(np.mean([r.delta_e for r in reports])),
    )


def write_metrics_csv(rows: Iterable[Tuple[str, MetricReport]], path: str) -> None:
    """
    Writes one `name,psnr,ssim,delta_e` row per image.

    Raises:
        IoFailure: If the file cannot be written.
    """
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["name", "psnr", "ssim", "delta_e"])
            for name, report in rows:
                writer.writerow(
                    [name, f"{report.psnr:.4f}", f"{report.ssim:.6f}", f"{report.delta_e:.4f}"]
                )
    except OSError as e:
        raise IoFailure(f"Cannot write metrics CSV '{path}': {e}") from e
