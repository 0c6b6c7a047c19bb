# lut_retouch/core/engine.py

"""
Pure-LUT inference, plus the harnesses that check and time it.

`retouch` predicts basis weights from a downsampled working image using only
Channel LUT lookups, float32 pooling, Weight LUT lookups and integer sums,
then applies the fused lattice to the full image. It never evaluates a
branch or the split-FC head.

The network-path helpers (`network_weights`, `network_retouch`) run the
trained model through the same pooling and quantization so that
`verify_equivalence` can compare both paths on identical inputs.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import (
    DEFAULT_BENCH_REPEATS,
    DEFAULT_BENCH_WARMUP,
    DEFAULT_WORKING_SIZE,
    INT8_LIMIT,
    NIBBLE_LEVELS,
    QuantSpec,
)
from .errors import DimensionMismatch, PreconditionError
from .imaging import ImageU8, bilinear_downsample, split_bitplanes, unit_to_u8
from .lutgen import LutBundle, dequantize_index, feature_index
from .model import (
    TrainableModel,
    apply_plan,
    mean_pool_f32,
    pooled_features_f32,
    trilinear_plan,
)
from .utils import resolve_threads

logger = logging.getLogger(__name__)

# Arithmetic per pixel of trilinear_plan + apply_plan: 3 scalings, 3
# fractions, 3 complements, 16 corner-weight products, 24 weighted
# multiplies and 24 accumulating adds.
INTERPOLATION_OPS_PER_PIXEL = 73


@dataclass
class OpCounter:
    """Tallies lookups and arithmetic as the LUT path executes them."""

    table_lookups: int = 0
    adds: int = 0
    accumulation_adds: int = 0
    multiplies: int = 0
    fusion_ops: int = 0
    interpolation_ops: int = 0

    def report(self) -> "OpCountReport":
        return OpCountReport(
            table_lookups=self.table_lookups,
            adds=self.adds,
            accumulation_adds=self.accumulation_adds,
            multiplies=self.multiplies,
            fusion_ops=self.fusion_ops,
            interpolation_ops=self.interpolation_ops,
        )


@dataclass(frozen=True)
class OpCountReport:
    """
    Exact operation counts of one `retouch` call.

    `adds` and `multiplies` cover the weight stage only; lattice fusion and
    interpolation are reported separately because they scale with the
    lattice and the full image instead of the working image.
    """

    table_lookups: int
    adds: int
    accumulation_adds: int
    multiplies: int
    fusion_ops: int
    interpolation_ops: int

    @property
    def weight_stage_ops(self) -> int:
        return self.adds + self.multiplies

    def to_dict(self) -> Dict[str, int]:
        data = asdict(self)
        data["weight_stage_ops"] = self.weight_stage_ops
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# --- Weight stage ---


def _nibble_rows(plane: np.ndarray) -> np.ndarray:
    flat = plane.reshape(-1, 3).astype(np.int64)
    return (flat[:, 0] * NIBBLE_LEVELS + flat[:, 1]) * NIBBLE_LEVELS + flat[:, 2]


def lut_features(
    bundle: LutBundle, working_img: ImageU8, counter: Optional[OpCounter] = None
) -> np.ndarray:
    """Pooled float32 feature vector U read from the Channel LUTs."""
    planes = split_bitplanes(working_img)
    pooled: Optional[np.ndarray] = None
    for lut, plane in ((bundle.msb, planes.msb), (bundle.lsb, planes.lsb)):
        rows = lut.table[_nibble_rows(plane)]
        part = mean_pool_f32(rows)
        pooled = part if pooled is None else pooled + part
        if counter is not None:
            counter.table_lookups += rows.shape[0]
            counter.adds += rows.size
            counter.accumulation_adds += rows.size
            counter.multiplies += lut.channels
    assert pooled is not None
    if counter is not None:
        counter.adds += bundle.config.channels
    return pooled


def lut_weights(
    bundle: LutBundle, working_img: ImageU8, counter: Optional[OpCounter] = None
) -> np.ndarray:
    """
    Predicts basis weights from lookups alone.

    Steps: Channel LUT rows are gathered per pixel and mean-pooled per
    branch in float32; the branch means are added into U; U is quantized
    to Weight LUT indices; each group's int8 row is fetched, the rows are
    summed as int32 and multiplied once by s_w.

    Returns:
        float64 weight vector of length N.
    """
    cfg = bundle.config
    pooled = lut_features(bundle, working_img, counter)
    indices = np.asarray(feature_index(pooled, bundle.quant)).reshape(cfg.groups, cfg.group_length)
    partial = bundle.weight_lut.tables[np.arange(cfg.groups), indices[:, 0], indices[:, 1]]
    total = partial.astype(np.int32).sum(axis=0)
    if counter is not None:
        counter.multiplies += 3 * cfg.channels
        counter.adds += cfg.channels
        counter.table_lookups += cfg.groups
        counter.adds += (cfg.groups - 1) * cfg.basis_count
        counter.multiplies += cfg.basis_count
    return total.astype(np.float64) * bundle.scale


# --- Colour stage ---


def fuse_basis(basis: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_n w_n * basis_n accumulated in float64, shape (M, M, M, 3)."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (basis.shape[0],):
        raise DimensionMismatch(f"Expected {basis.shape[0]} weights, got shape {weights.shape}.")
    return np.tensordot(weights, basis.astype(np.float64), axes=1)


def apply_lattice(table: np.ndarray, full_img: ImageU8, threads: int = 1) -> ImageU8:
    """
    Interpolates every pixel through a lattice and rounds half-up to bytes.

    Rows of the image are split into contiguous chunks for the workers;
    each pixel's arithmetic is the same whichever chunk it lands in.
    """
    bins = table.shape[0]
    unit = full_img.to_unit().reshape(-1, 3)

    def run(chunk: np.ndarray) -> np.ndarray:
        return apply_plan(trilinear_plan(chunk, bins), table)

    if threads <= 1 or unit.shape[0] < 2 * threads:
        out = run(unit)
    else:
        chunks = np.array_split(unit, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = np.concatenate(list(pool.map(run, chunks)))
    return ImageU8(unit_to_u8(out.reshape(full_img.height, full_img.width, 3)))


def retouch(
    bundle: LutBundle,
    full_img: ImageU8,
    working_size: int = DEFAULT_WORKING_SIZE,
    threads: Optional[int] = 1,
    counter: Optional[OpCounter] = None,
) -> ImageU8:
    """
    Retouches an image with a LUT bundle.

    Args:
        bundle: Baked tables.
        full_img: Image to retouch; the output has the same size.
        working_size: Side of the square working image used for weights.
        threads: Interpolation workers (None = `ICELUT_THREADS` cap).
        counter: Optional operation counter.

    Returns:
        The retouched ImageU8.
    """
    working = bilinear_downsample(full_img, working_size, working_size)
    weights = lut_weights(bundle, working, counter)
    table = fuse_basis(bundle.basis, weights)
    if counter is not None:
        vertices = bundle.basis[0].size
        counter.fusion_ops += (2 * bundle.config.basis_count - 1) * vertices
        counter.interpolation_ops += INTERPOLATION_OPS_PER_PIXEL * full_img.width * full_img.height
    return apply_lattice(table, full_img, resolve_threads(threads))


def count_ops(
    bundle: LutBundle,
    working_size: int = DEFAULT_WORKING_SIZE,
    full_size: Union[int, Tuple[int, int]] = (640, 480),
) -> OpCountReport:
    """
    Runs the instrumented LUT path on a synthetic image and reports its counts.

    Args:
        bundle: Baked tables.
        working_size: Working image side.
        full_size: Full image side, or (width, height).
    """
    width, height = (full_size, full_size) if isinstance(full_size, int) else full_size
    rng = np.random.default_rng(0)
    img = ImageU8(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))
    counter = OpCounter()
    retouch(bundle, img, working_size=working_size, threads=1, counter=counter)
    return counter.report()


# --- Network path ---


def network_weights(
    model: TrainableModel,
    working_img: ImageU8,
    q: Optional[QuantSpec] = None,
    fake_int8: Optional[float] = None,
) -> np.ndarray:
    """
    Predicts weights with the network, pooled the way the LUT path pools.

    Args:
        model: Trained model.
        working_img: Working image.
        q: When given, U is snapped to the Weight LUT grid first.
        fake_int8: When given, each group output is rounded to an int8
            multiple of this scale before the groups are summed.

    Returns:
        float64 weight vector of length N.
    """
    pooled = pooled_features_f32(model, working_img)
    if q is not None:
        features = np.asarray(dequantize_index(feature_index(pooled, q), q))
    else:
        features = pooled.astype(np.float64)
    partial = model.head.group_outputs(features)
    if fake_int8 is None:
        return partial.sum(axis=0)
    stored = np.clip(np.rint(partial / fake_int8), -INT8_LIMIT, INT8_LIMIT).astype(np.int32)
    return stored.sum(axis=0).astype(np.float64) * fake_int8


def network_retouch(
    model: TrainableModel,
    full_img: ImageU8,
    working_size: int = DEFAULT_WORKING_SIZE,
    q: Optional[QuantSpec] = None,
    scale: Optional[float] = None,
) -> ImageU8:
    """
    Retouches with the network weight path.

    With `q` set the conversion is simulated end to end: U is quantized,
    group outputs are fake-quantized with `scale` (if given) and the basis
    lattices are rounded to float32.
    """
    working = bilinear_downsample(full_img, working_size, working_size)
    weights = network_weights(model, working, q, scale)
    basis = model.basis.astype(np.float32) if q is not None else model.basis
    return apply_lattice(fuse_basis(basis, weights), full_img)


# --- Verification ---


@dataclass
class EquivalenceRow:
    index: int
    weight_deviation: float
    pixel_deviation: int


@dataclass
class EquivalenceReport:
    """
    Deviation of the LUT path from the network path.

    Attributes:
        max_weight_deviation: Largest |w_lut - w_net| with the network U
            quantized onto the Weight LUT grid.
        weight_bound: K * s_w / 2.
        max_pixel_deviation: Largest per-channel byte difference between
            LUT retouching and fully conversion-quantized network retouching.
        rows: Per-image deviations.
    """

    max_weight_deviation: float
    weight_bound: float
    max_pixel_deviation: int
    rows: List[EquivalenceRow] = field(default_factory=list)

    @property
    def within_bounds(self) -> bool:
        slack = 1e-9 * max(1.0, self.weight_bound)
        return self.max_weight_deviation <= self.weight_bound + slack and self.max_pixel_deviation <= 1

    def to_dict(self) -> Dict[str, object]:
        return {
            "max_weight_deviation": self.max_weight_deviation,
            "weight_bound": self.weight_bound,
            "max_pixel_deviation": self.max_pixel_deviation,
            "within_bounds": self.within_bounds,
            "images": [asdict(row) for row in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _check_compatible(model: TrainableModel, bundle: LutBundle) -> None:
    m, b = model.config, bundle.config
    shape_m = (m.channels, m.groups, m.group_length, m.basis_count, m.bins)
    shape_b = (b.channels, b.groups, b.group_length, b.basis_count, b.bins)
    if shape_m != shape_b:
        raise DimensionMismatch(
            f"Model (C, K, L, N, M)={shape_m} does not match bundle {shape_b}."
        )
    if not m.bakeable:
        raise DimensionMismatch("Only the parallel pointwise RGB variant can be compared with a bundle.")


def verify_equivalence(
    model: TrainableModel,
    bundle: LutBundle,
    images: Sequence[ImageU8],
    working_size: int = DEFAULT_WORKING_SIZE,
) -> EquivalenceReport:
    """
    Compares LUT inference with the network on a set of images.

    Deviations are reported, never raised; callers decide what a bound
    violation means.

    Raises:
        DimensionMismatch: If model and bundle architectures differ.
    """
    _check_compatible(model, bundle)
    rows = []
    for index, img in enumerate(images):
        working = bilinear_downsample(img, working_size, working_size)
        w_lut = lut_weights(bundle, working)
        w_net = network_weights(model, working, bundle.quant)
        lut_img = retouch(bundle, img, working_size, threads=1)
        net_img = network_retouch(model, img, working_size, bundle.quant, bundle.scale)
        pixel = int(np.max(np.abs(lut_img.data.astype(np.int16) - net_img.data.astype(np.int16))))
        rows.append(EquivalenceRow(index, float(np.max(np.abs(w_lut - w_net))), pixel))
    report = EquivalenceReport(
        max_weight_deviation=max((r.weight_deviation for r in rows), default=0.0),
        weight_bound=bundle.config.groups * bundle.scale / 2.0,
        max_pixel_deviation=max((r.pixel_deviation for r in rows), default=0),
        rows=rows,
    )
    logger.debug(
        "Equivalence: weight %.3g (bound %.3g), pixel %d",
        report.max_weight_deviation, report.weight_bound, report.max_pixel_deviation,
    )
    return report


# --- Benchmark ---


@dataclass(frozen=True)
class StageStats:
    median: float
    p10: float
    p90: float

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "StageStats":
        values = np.asarray(samples, dtype=np.float64)
        return cls(
            median=float(np.median(values)),
            p10=float(np.percentile(values, 10)),
            p90=float(np.percentile(values, 90)),
        )


@dataclass
class BenchReport:
    """Wall-clock stage timings in milliseconds."""

    weight_stage_ms: StageStats
    interpolation_stage_ms: StageStats
    image_count: int
    repeats: int
    threads: int
    network_weight_stage_ms: Optional[StageStats] = None

    @property
    def weight_speedup(self) -> Optional[float]:
        """Network weight-stage median divided by the LUT weight-stage median."""
        if self.network_weight_stage_ms is None or self.weight_stage_ms.median <= 0:
            return None
        return self.network_weight_stage_ms.median / self.weight_stage_ms.median

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data["weight_speedup"] = self.weight_speedup
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def bench(
    bundle: LutBundle,
    images: Sequence[ImageU8],
    repeats: int = DEFAULT_BENCH_REPEATS,
    model: Optional[TrainableModel] = None,
    threads: int = 1,
    warmup: int = DEFAULT_BENCH_WARMUP,
    working_size: int = DEFAULT_WORKING_SIZE,
) -> BenchReport:
    """
    Times the weight and interpolation stages of LUT inference.

    The weight stage is timed on pre-downsampled working images so that the
    optional network comparison measures the same work.

    Raises:
        PreconditionError: If repeats < 3, warmup < 1 or `images` is empty.
    """
    if repeats < 3:
        raise PreconditionError(f"bench needs at least 3 repeats, got {repeats}.")
    if warmup < 1:
        raise PreconditionError(f"bench needs at least one warmup iteration, got {warmup}.")
    if not images:
        raise PreconditionError("bench needs at least one image.")
    if model is not None:
        _check_compatible(model, bundle)
    workers = resolve_threads(threads)
    workings = [bilinear_downsample(img, working_size, working_size) for img in images]

    lut_ms: List[float] = []
    interp_ms: List[float] = []
    net_ms: List[float] = []
    for iteration in range(warmup + repeats):
        record = iteration >= warmup
        for img, working in zip(images, workings):
            start = time.perf_counter()
            weights = lut_weights(bundle, working)
            elapsed = _elapsed_ms(start)
            start = time.perf_counter()
            apply_lattice(fuse_basis(bundle.basis, weights), img, workers)
            interp = _elapsed_ms(start)
            if model is not None:
                start = time.perf_counter()
                network_weights(model, working)
                net = _elapsed_ms(start)
                if record:
                    net_ms.append(net)
            if record:
                lut_ms.append(elapsed)
                interp_ms.append(interp)

    return BenchReport(
        weight_stage_ms=StageStats.from_samples(lut_ms),
        interpolation_stage_ms=StageStats.from_samples(interp_ms),
        image_count=len(images),
        repeats=repeats,
        threads=workers,
        network_weight_stage_ms=StageStats.from_samples(net_ms) if net_ms else None,
    )
