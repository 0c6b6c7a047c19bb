# lut_retouch/core/training.py

"""
Adam optimization, the training loop and model checkpoints.

Checkpoints are single little-endian files: the `ICEMDL01` magic, the
architecture as u32 fields, then every parameter in `parameters()` order as
a u64 element count followed by float32 values.
"""

import csv
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .backprop import loss_and_gradients
from .config import BRANCH_MODES, HEAD_MODES, MODEL_MAGIC, ModelConfig, TrainConfig
from .errors import CheckpointError, ConfigError, DimensionMismatch, EmptyDataset, IoFailure
from .imaging import ImageU8
from .model import TrainableModel, working_image

logger = logging.getLogger(__name__)

ImagePair = Tuple[ImageU8, ImageU8]
StepCallback = Callable[[int, float], None]


@dataclass
class AdamState:
    """First and second moment estimates plus the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    Applies one bias-corrected Adam update in place.

    Args:
        params: Parameter arrays, updated in place.
        grads: Gradients with the same keys and shapes.
        state: Moments from previous steps; updated in place.
        config: Learning rate and moment parameters.

    Returns:
        The same (params, state) objects, for chaining.

    Raises:
        DimensionMismatch: If keys or shapes of params and grads differ.
    """
    if params.keys() != grads.keys():
        raise DimensionMismatch(
            f"Gradient keys {sorted(grads)} do not match parameters {sorted(params)}."
        )
    for name, value in params.items():
        if np.shape(grads[name]) != value.shape:
            raise DimensionMismatch(
                f"Gradient for '{name}' has shape {np.shape(grads[name])}, expected {value.shape}."
            )

    state.t += 1
    beta1, beta2 = config.beta1, config.beta2
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, value in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None or v is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        value -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return params, state


@dataclass
class TrainResult:
    """A trained model with the mean loss of every optimizer step."""

    model: TrainableModel
    loss_history: List[float]

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")


def train(
    dataset: Sequence[ImagePair],
    model_config: ModelConfig,
    train_config: TrainConfig,
    model: Optional[TrainableModel] = None,
    on_step: Optional[StepCallback] = None,
) -> TrainResult:
    """
    Trains a model on paired images with L1 loss and Adam.

    Each epoch visits the pairs in a seeded random order. Gradients of a
    batch are averaged before one Adam step. Training stops after
    `epochs` passes or `max_steps` steps, whichever comes first.

    Args:
        dataset: (input, target) pairs; each target matches its input's size.
        model_config: Architecture; ignored when `model` is given.
        train_config: Optimizer schedule.
        model: Optional model to continue training (updated in place).
        on_step: Called with (step, loss) after every step.

    Returns:
        TrainResult holding the model and per-step losses.

    Raises:
        EmptyDataset: If `dataset` has no pairs.
        DimensionMismatch: If a target does not match its input.
    """
    pairs = list(dataset)
    if not pairs:
        raise EmptyDataset("Cannot train on an empty dataset.")
    for index, (source, target) in enumerate(pairs):
        if (source.width, source.height) != (target.width, target.height):
            raise DimensionMismatch(
                f"Pair {index}: input {source.width}x{source.height} vs "
                f"target {target.width}x{target.height}."
            )

    init_seq, shuffle_seq = np.random.SeedSequence(train_config.seed).spawn(2)
    if model is None:
        model = TrainableModel.initialize(
            model_config, seed=int(init_seq.generate_state(1)[0])
        )
    rng = np.random.default_rng(shuffle_seq)

    resolution = model.config.train_resolution
    workings = [working_image(source, resolution) for source, _ in pairs]
    targets = [target.to_unit() for _, target in pairs]

    params = model.parameters()
    state = AdamState()
    history: List[float] = []
    batch_size = train_config.batch_size

    logger.info(
        "Training on %d pairs for %d epochs (lr=%g, batch=%d).",
        len(pairs), train_config.epochs, train_config.learning_rate, batch_size,
    )
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            total_loss = 0.0
            summed: Dict[str, np.ndarray] = {}
            for idx in batch:
                loss, grads = loss_and_gradients(model, pairs[idx][0], workings[idx], targets[idx])
                total_loss += loss
                for name, grad in grads.items():
                    summed[name] = grad if name not in summed else summed[name] + grad
            averaged = {name: grad / len(batch) for name, grad in summed.items()}
            adam_step(params, averaged, state, train_config)

            step_loss = total_loss / len(batch)
            history.append(step_loss)
            if on_step is not None:
                on_step(len(history), step_loss)
            if len(history) % train_config.log_every == 0:
                logger.debug("epoch %d step %d loss %.6f", epoch + 1, len(history), step_loss)
            if train_config.max_steps is not None and len(history) >= train_config.max_steps:
                logger.info("Reached step cap %d.", train_config.max_steps)
                return TrainResult(model, history)
    return TrainResult(model, history)


def write_loss_history(history: Sequence[float], path: str) -> None:
    """Writes `step,loss` rows to a CSV file."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss"])
            for step, loss in enumerate(history, start=1):
                writer.writerow([step, f"{loss:.8f}"])
    except OSError as e:
        raise IoFailure(f"Cannot write loss history '{path}': {e}") from e


# --- Checkpoints ---

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def _config_fields(config: ModelConfig) -> List[int]:
    return [
        config.channels,
        config.groups,
        config.group_length,
        config.basis_count,
        config.bins,
        config.train_resolution,
        BRANCH_MODES.index(config.branch_mode),
        config.input_channels,
        config.first_kernel,
        HEAD_MODES.index(config.head_mode),
        len(config.layer_widths),
        *config.layer_widths,
    ]


def save_checkpoint(model: TrainableModel, path: str) -> None:
    """
    Writes a model checkpoint.

    Raises:
        IoFailure: If the file cannot be written.
    """
    chunks = [MODEL_MAGIC]
    fields = _config_fields(model.config)
    chunks.append(struct.pack(f"<{len(fields)}I", *fields))
    for value in model.parameters().values():
        chunks.append(_U64.pack(value.size))
        chunks.append(value.astype("<f4").tobytes())
    try:
        with open(path, "wb") as f:
            f.write(b"".join(chunks))
    except OSError as e:
        raise IoFailure(f"Cannot write checkpoint '{path}': {e}") from e


class _Reader:
    def __init__(self, raw: bytes, path: str) -> None:
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.raw):
            raise CheckpointError(f"Checkpoint '{self.path}' is truncated.")
        chunk = self.raw[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(_U32.size))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(_U64.size))[0]


def load_checkpoint(path: str) -> TrainableModel:
    """
    Reads a checkpoint written by `save_checkpoint`.

    Raises:
        IoFailure: If the file cannot be read.
        CheckpointError: On a wrong magic, bad architecture, truncated data,
            parameter size mismatch or trailing bytes.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoFailure(f"Cannot read checkpoint '{path}': {e}") from e

    reader = _Reader(raw, path)
    if reader.take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise CheckpointError(f"'{path}' is not a model checkpoint (bad magic).")
    head = [reader.u32() for _ in range(11)]
    widths = tuple(reader.u32() for _ in range(head[10]))
    try:
        if head[6] >= len(BRANCH_MODES) or head[9] >= len(HEAD_MODES):
            raise ConfigError("unknown branch or head mode code")
        config = ModelConfig(
            channels=head[0],
            groups=head[1],
            group_length=head[2],
            basis_count=head[3],
            bins=head[4],
            train_resolution=head[5],
            branch_mode=BRANCH_MODES[head[6]],
            input_channels=head[7],
            first_kernel=head[8],
            head_mode=HEAD_MODES[head[9]],
            layer_widths=widths,
        )
    except ConfigError as e:
        raise CheckpointError(f"Checkpoint '{path}' holds an invalid architecture: {e}") from e

    model = TrainableModel.initialize(config, seed=0, head_init_std=0.0)
    for name, value in model.parameters().items():
        count = reader.u64()
        if count != value.size:
            raise CheckpointError(
                f"Parameter '{name}' has {count} values in '{path}', expected {value.size}."
            )
        data = np.frombuffer(reader.take(4 * count), dtype="<f4")
        value[...] = data.reshape(value.shape)
    if reader.pos != len(raw):
        raise CheckpointError(f"Checkpoint '{path}' has {len(raw) - reader.pos} trailing bytes.")
    logger.debug("Loaded checkpoint '%s' (%s).", os.path.basename(path), config)
    return model
