# lut_retouch/core/model.py

"""
The trainable weight-prediction network and the basis-LUT color transform.

A model is two parallel pointwise branches (one per nibble plane), mean
pooling, a split fully-connected head that predicts N weights, and N basis
lattices. The weights blend the basis lattices into one 3D LUT which is then
applied to the full-resolution image with trilinear interpolation.

All parameters are float64 so gradients can be checked against finite
differences; lookup tables are baked to float32/int8 by `lutgen`.
"""

import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import HEAD_INIT_STD, NIBBLE_LEVELS, ModelConfig
from .errors import DimensionMismatch
from .imaging import ImageF32, ImageU8, bilinear_downsample, split_bitplanes

NIBBLE_MAX: int = NIBBLE_LEVELS - 1


class EvaluationCounter:
    """
    Counts branch and head evaluations.

    The LUT inference path must leave this counter untouched; tests read it
    before and after `engine.retouch` to prove no network code ran.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.branch_calls = 0
        self.head_calls = 0

    def record_branch(self) -> None:
        with self._lock:
            self.branch_calls += 1

    def record_head(self) -> None:
        with self._lock:
            self.head_calls += 1

    @property
    def total(self) -> int:
        return self.branch_calls + self.head_calls

    def reset(self) -> None:
        with self._lock:
            self.branch_calls = 0
            self.head_calls = 0


NETWORK_EVALUATIONS = EvaluationCounter()


# --- Branches ---


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """
    Computes x @ weight.T + bias one input feature at a time.

    Every row is accumulated in the same order whatever the batch size, so a
    pixel evaluated alone and inside a full-table enumeration gives
    bit-identical features.
    """
    out = np.repeat(bias[None, :].astype(np.float64), x.shape[0], axis=0)
    for i in range(weight.shape[1]):
        out += x[:, i, None] * weight[None, :, i]
    return out



@dataclass
class BranchTrace:
    """Activations kept by a branch forward pass for backpropagation."""

    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    output: np.ndarray


@dataclass
class PointwiseBranch:
    """
    A stack of per-pixel linear layers with ReLU between them.

    Layer i maps `in_width` to `out_width` features: `weights[i]` has shape
    (out, in) and `biases[i]` shape (out,). ReLU follows every layer except
    the last.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def initialize(
        cls, in_width: int, widths: Sequence[int], rng: np.random.Generator
    ) -> "PointwiseBranch":
        """He-normal weights, zero biases."""
        weights, biases = [], []
        fan_in = in_width
        for width in widths:
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, fan_in)))
            biases.append(np.zeros(width))
            fan_in = width
        return cls(weights, biases)

    @property
    def in_width(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def out_width(self) -> int:
        return int(self.weights[-1].shape[0])

    @property
    def layer_count(self) -> int:
        return len(self.weights)

    def trace(self, rows: np.ndarray) -> BranchTrace:
        """Runs the branch on (P, in_width) rows, keeping every activation."""
        NETWORK_EVALUATIONS.record_branch()
        if rows.shape[-1] != self.in_width:
            raise DimensionMismatch(
                f"Branch expects {self.in_width} input features, got {rows.shape[-1]}."
            )
        inputs, pre = [rows], []
        x = rows
        last = self.layer_count - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = dense(x, w, b)
            if i < last:
                pre.append(z)
                x = np.maximum(z, 0.0)
                inputs.append(x)
            else:
                x = z
        return BranchTrace(inputs=inputs, pre_activations=pre, output=x)

    def forward(self, rows: np.ndarray) -> np.ndarray:
        """Returns the (P, out_width) features of (P, in_width) rows."""
        return self.trace(rows).output


def branch_names(config: ModelConfig) -> Tuple[str, ...]:
    return ("msb", "lsb") if config.branch_mode == "parallel" else ("byte",)


def branch_input_width(config: ModelConfig) -> int:
    per_pixel = 3 if config.input_channels == 3 else 1
    return per_pixel * config.first_kernel * config.first_kernel


def branch_planes(img: ImageU8, config: ModelConfig) -> List[np.ndarray]:
    """Normalized (H, W, 3) inputs of each branch: nibble/15 or byte/255."""
    if config.branch_mode == "parallel":
        planes = split_bitplanes(img)
        return [planes.msb / float(NIBBLE_MAX), planes.lsb / float(NIBBLE_MAX)]
    return [img.to_unit()]


def branch_rows(plane: np.ndarray, config: ModelConfig) -> np.ndarray:
    """
    Flattens a normalized plane into the rows a branch consumes.

    Color-aware branches see one row per pixel. Per-channel branches
    (`input_channels == 1`) see one row per pixel and channel. A 3x3 first
    kernel stacks the zero-padded neighbourhood of every sample into its row.
    """
    if config.input_channels == 1:
        stacks = np.moveaxis(plane, -1, 0)[..., None]
    else:
        stacks = plane[None]
    kernel = config.first_kernel
    if kernel > 1:
        pad = kernel // 2
        height, width = plane.shape[:2]
        padded = np.pad(stacks, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        shifted = [
            padded[:, dy:dy + height, dx:dx + width, :]
            for dy in range(kernel)
            for dx in range(kernel)
        ]
        stacks = np.concatenate(shifted, axis=-1)
    return np.ascontiguousarray(stacks.reshape(-1, stacks.shape[-1]))


def branch_pixel_features(branch: PointwiseBranch, nibble_rgb: Sequence[int]) -> np.ndarray:
    """
    Evaluates a color-aware branch on a single nibble triple.

    Args:
        branch: A branch with input width 3.
        nibble_rgb: (r, g, b) values in 0..15, normalized as value / 15.

    Returns:
        float64 feature vector of length `branch.out_width`.
    """
    rgb = np.asarray(nibble_rgb, dtype=np.float64).reshape(1, 3)
    if np.any(rgb < 0) or np.any(rgb > NIBBLE_MAX):
        raise ValueError(f"Nibble values must lie in 0..{NIBBLE_MAX}, got {nibble_rgb}.")
    return branch.forward(rgb / float(NIBBLE_MAX))[0]


# --- Split FC head ---


@dataclass
class SplitFC:
    """
    K independent linear maps over consecutive length-L slices of U.

    Attributes:
        weights: (K, N, L) array; group k reads U[k*L:(k+1)*L].
        biases: (K, N) array.
    """

    weights: np.ndarray
    biases: np.ndarray

    @property
    def groups(self) -> int:
        return int(self.weights.shape[0])

    @property
    def basis_count(self) -> int:
        return int(self.weights.shape[1])

    @property
    def group_length(self) -> int:
        return int(self.weights.shape[2])

    @property
    def in_width(self) -> int:
        return self.groups * self.group_length

    def split(self, features: np.ndarray) -> np.ndarray:
        """Reshapes (..., C) features into (..., K, L) groups."""
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.in_width:
            raise DimensionMismatch(
                f"Split FC expects {self.in_width} features, got {features.shape[-1]}."
            )
        return features.reshape(features.shape[:-1] + (self.groups, self.group_length))

    def group_outputs(self, features: np.ndarray) -> np.ndarray:
        """
        Per-group outputs W_k . U_k + b_k with shape (..., K, N).

        Evaluated elementwise so a value depends only on its own group input;
        Weight LUT baking relies on this to reproduce entries bit-for-bit.
        """
        NETWORK_EVALUATIONS.record_head()
        groups = self.split(features)
        return (self.weights * groups[..., :, None, :]).sum(axis=-1) + self.biases

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Sums the group outputs into (..., N) weights."""
        return self.group_outputs(features).sum(axis=-2)


def predict_weights(head: SplitFC, features: np.ndarray) -> np.ndarray:
    """
    Maps a pooled feature vector U to the N basis weights.

    Raises:
        DimensionMismatch: If |U| != C.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise DimensionMismatch(f"U must be a vector, got shape {features.shape}.")
    return head.forward(features)


# --- Lattices and interpolation ---


@dataclass(frozen=True)
class Lattice3D:
    """
    An M x M x M lattice of RGB outputs.

    `table[i, j, k]` is the output color at input (i, j, k) / (M - 1).
    """

    table: np.ndarray

    def __post_init__(self) -> None:
        table = np.asarray(self.table, dtype=np.float64)
        m = table.shape[0]
        if table.shape != (m, m, m, 3) or m < 2:
            raise DimensionMismatch(f"Lattice must have shape (M, M, M, 3), got {table.shape}.")
        if not np.all(np.isfinite(table)):
            raise ValueError("Lattice entries must be finite.")
        object.__setattr__(self, "table", table)

    @property
    def bins(self) -> int:
        return int(self.table.shape[0])

    @classmethod
    def identity(cls, bins: int) -> "Lattice3D":
        return cls(identity_table(bins))


def identity_table(bins: int) -> np.ndarray:
    """(M, M, M, 3) array whose vertex (i, j, k) holds (i, j, k) / (M - 1)."""
    axis = np.arange(bins, dtype=np.float64) / (bins - 1)
    r, g, b = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([r, g, b], axis=-1)


BasisLike = Union[np.ndarray, Sequence[Lattice3D]]


def _stack_basis(basis: BasisLike) -> np.ndarray:
    if isinstance(basis, np.ndarray):
        stack = basis
    else:
        tables = [lattice.table for lattice in basis]
        if len({t.shape for t in tables}) > 1:
            raise DimensionMismatch("All basis lattices must share the same bin count.")
        stack = np.stack(tables)
    if stack.ndim != 5 or stack.shape[-1] != 3:
        raise DimensionMismatch(f"Basis must have shape (N, M, M, M, 3), got {stack.shape}.")
    return stack


def fuse_luts(basis: BasisLike, weights: np.ndarray) -> Lattice3D:
    """
    Blends N basis lattices into one: fused = sum_n w_n * basis_n.

    Raises:
        DimensionMismatch: If |w| != N or the lattices disagree on M.
    """
    stack = _stack_basis(basis)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (stack.shape[0],):
        raise DimensionMismatch(
            f"Expected {stack.shape[0]} weights, got shape {weights.shape}."
        )
    return Lattice3D(np.tensordot(weights, stack, axes=1))


@dataclass(frozen=True)
class TrilinearPlan:
    """
    The eight lattice vertices and weights touched by each input color.

    Attributes:
        indices: (P, 8) flat vertex indices into an (M^3, 3) table.
        weights: (P, 8) interpolation weights; each row sums to 1.
    """

    indices: np.ndarray
    weights: np.ndarray
    bins: int


def trilinear_plan(unit_rgb: np.ndarray, bins: int) -> TrilinearPlan:
    """
    Locates each (P, 3) color in [0, 1]^3 inside the lattice.

    The cell is chosen so that colors on a vertex get weight exactly 1 on
    that vertex; the upper face (value 1) belongs to the last cell.
    """
    coords = np.clip(np.asarray(unit_rgb, dtype=np.float64), 0.0, 1.0) * (bins - 1)
    base = np.minimum(np.floor(coords).astype(np.int64), bins - 2)
    frac = coords - base
    indices = np.empty((coords.shape[0], 8), dtype=np.int64)
    weights = np.empty((coords.shape[0], 8), dtype=np.float64)
    corner = 0
    for dr in (0, 1):
        wr = frac[:, 0] if dr else 1.0 - frac[:, 0]
        for dg in (0, 1):
            wg = frac[:, 1] if dg else 1.0 - frac[:, 1]
            for db in (0, 1):
                wb = frac[:, 2] if db else 1.0 - frac[:, 2]
                indices[:, corner] = (
                    (base[:, 0] + dr) * bins + (base[:, 1] + dg)
                ) * bins + (base[:, 2] + db)
                weights[:, corner] = wr * wg * wb
                corner += 1
    return TrilinearPlan(indices=indices, weights=weights, bins=bins)


def apply_plan(plan: TrilinearPlan, table: np.ndarray) -> np.ndarray:
    """Interpolates an (M, M, M, 3) table at the planned colors; returns (P, 3)."""
    flat = np.asarray(table).reshape(-1, 3)
    out = np.zeros((plan.indices.shape[0], 3), dtype=np.float64)
    for corner in range(8):
        out += plan.weights[:, corner, None] * flat[plan.indices[:, corner]]
    return out


def trilinear_apply(lattice: Lattice3D, img: ImageU8) -> ImageF32:
    """
    Maps every pixel (r, g, b) / 255 through the lattice.

    Args:
        lattice: The color transform.
        img: Full-resolution input.

    Returns:
        The mapped image, clamped to [0, 1].
    """
    plan = trilinear_plan(img.to_unit().reshape(-1, 3), lattice.bins)
    out = apply_plan(plan, lattice.table)
    return ImageF32(out.reshape(img.height, img.width, 3))


# --- The model ---


@dataclass
class TrainableModel:
    """
    Branches, split-FC head and basis lattices of one retouching model.

    Attributes:
        config: The architecture.
        branches: One branch per input plane (MSB and LSB, or one byte branch).
        head: The split-FC weight predictor.
        basis: (N, M, M, M, 3) basis lattices.
    """

    config: ModelConfig
    branches: List[PointwiseBranch]
    head: SplitFC
    basis: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        cfg = self.config
        if len(self.branches) != cfg.branch_count:
            raise DimensionMismatch(f"Expected {cfg.branch_count} branches, got {len(self.branches)}.")
        for branch in self.branches:
            if branch.out_width != cfg.channels:
                raise DimensionMismatch(
                    f"Branch output width {branch.out_width} != C ({cfg.channels})."
                )
        expected = (cfg.basis_count,) + (cfg.bins,) * 3 + (3,)
        if self.basis.shape != expected:
            raise DimensionMismatch(f"Basis shape {self.basis.shape} != {expected}.")
        if self.head.weights.shape != (cfg.groups, cfg.basis_count, cfg.group_length):
            raise DimensionMismatch(f"Head shape {self.head.weights.shape} does not match the config.")

    @classmethod
    def initialize(
        cls, config: ModelConfig, seed: int = 0, head_init_std: float = HEAD_INIT_STD
    ) -> "TrainableModel":
        """
        Builds a model whose initial output is (close to) the identity.

        Basis 0 is the identity lattice and the others are zero; the head
        biases sum to e_0 and the head weights are small, so w is about e_0.
        """
        rng = np.random.default_rng(seed)
        widths = tuple(config.layer_widths) + (config.channels,)
        in_width = branch_input_width(config)
        branches = [
            PointwiseBranch.initialize(in_width, widths, rng) for _ in range(config.branch_count)
        ]
        shape = (config.groups, config.basis_count, config.group_length)
        head_weights = rng.normal(0.0, head_init_std, size=shape) if head_init_std > 0 else np.zeros(shape)
        head_biases = np.zeros((config.groups, config.basis_count))
        head_biases[0, 0] = 1.0
        basis = np.zeros((config.basis_count,) + (config.bins,) * 3 + (3,))
        basis[0] = identity_table(config.bins)
        return cls(config, branches, SplitFC(head_weights, head_biases), basis)

    @property
    def msb_branch(self) -> PointwiseBranch:
        return self.branches[0]

    @property
    def lsb_branch(self) -> Optional[PointwiseBranch]:
        return self.branches[1] if len(self.branches) > 1 else None

    def parameters(self) -> Dict[str, np.ndarray]:
        """
        Every trainable array, keyed in declaration order.

        The arrays are the model's own storage, so in-place updates (Adam)
        change the model.
        """
        params: Dict[str, np.ndarray] = {}
        for name, branch in zip(branch_names(self.config), self.branches):
            for i, (w, b) in enumerate(zip(branch.weights, branch.biases)):
                params[f"{name}.w{i}"] = w
                params[f"{name}.b{i}"] = b
        params["head.w"] = self.head.weights
        params["head.b"] = self.head.biases
        params["basis"] = self.basis
        return params

    def copy(self) -> "TrainableModel":
        branches = [
            PointwiseBranch([w.copy() for w in b.weights], [x.copy() for x in b.biases])
            for b in self.branches
        ]
        head = SplitFC(self.head.weights.copy(), self.head.biases.copy())
        return TrainableModel(self.config, branches, head, self.basis.copy())


def working_image(img: ImageU8, size: int) -> ImageU8:
    """Downsamples an image to the square working resolution."""
    return bilinear_downsample(img, size, size)


def pooled_features(model: TrainableModel, img: ImageU8) -> np.ndarray:
    """
    Pooled feature vector U of a working image.

    Each branch is mean-pooled over its rows and the branch means are added.

    Returns:
        float64 vector of length C.
    """
    pooled = np.zeros(model.config.channels)
    for branch, plane in zip(model.branches, branch_planes(img, model.config)):
        pooled += branch.forward(branch_rows(plane, model.config)).mean(axis=0)
    return pooled


def mean_pool_f32(rows: np.ndarray) -> np.ndarray:
    """
    Mean of float32 feature rows, accumulated in float32 in row order.

    The LUT engine and the network comparison path both pool through this
    function so that equal rows give bit-identical U.
    """
    rows = np.ascontiguousarray(rows, dtype=np.float32)
    return rows.sum(axis=0, dtype=np.float32) / np.float32(rows.shape[0])


def pooled_features_f32(model: TrainableModel, img: ImageU8) -> np.ndarray:
    """U computed from float32-rounded branch features, as a Channel LUT stores them."""
    pooled: Optional[np.ndarray] = None
    for branch, plane in zip(model.branches, branch_planes(img, model.config)):
        part = mean_pool_f32(branch.forward(branch_rows(plane, model.config)).astype(np.float32))
        pooled = part if pooled is None else pooled + part
    assert pooled is not None
    return pooled


def forward(
    model: TrainableModel, full_img: ImageU8, working_img: ImageU8
) -> Tuple[ImageF32, np.ndarray]:
    """
    Runs the whole network path on one image.

    Args:
        model: The model.
        full_img: Image the fused lattice is applied to.
        working_img: Downsampled copy used for weight prediction.

    Returns:
        (retouched image, predicted weights).
    """
    weights = predict_weights(model.head, pooled_features(model, working_img))
    fused = fuse_luts(model.basis, weights)
    return trilinear_apply(fused, full_img), weights


def l1_loss(pred: ImageF32, target: ImageF32) -> float:
    """
    Mean absolute difference over all samples.

    Raises:
        DimensionMismatch: If the images differ in size.
    """
    if pred.data.shape != target.data.shape:
        raise DimensionMismatch(
            f"Cannot compare {pred.width}x{pred.height} with {target.width}x{target.height}."
        )
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    return float(np.abs(diff).mean())
