# lut_retouch/core/backprop.py

"""
Exact reverse-mode gradients of the L1 retouching loss.

The forward pass keeps every branch activation, the pooled vector, the
predicted weights and the trilinear plan; `loss_and_gradients` then walks
back through interpolation, fusion, the split-FC head, pooling and both
branches. The loss is taken on the output clamped to [0, 1], as `forward`
returns it; samples on the clamp carry no gradient.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import numpy as np

from .errors import DimensionMismatch
from .imaging import ImageF32, ImageU8
from .model import (
    BranchTrace,
    PointwiseBranch,
    TrainableModel,
    TrilinearPlan,
    apply_plan,
    branch_names,
    branch_planes,
    branch_rows,
    fuse_luts,
    predict_weights,
    trilinear_plan,
)

Target = Union[ImageU8, ImageF32, np.ndarray]


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one forward evaluation."""

    traces: List[BranchTrace]
    pooled: np.ndarray
    weights: np.ndarray
    plan: TrilinearPlan
    output: np.ndarray
    inside: np.ndarray


def _target_unit(target: Target) -> np.ndarray:
    if isinstance(target, ImageU8):
        return target.to_unit()
    if isinstance(target, ImageF32):
        return target.data.astype(np.float64)
    return np.asarray(target, dtype=np.float64)


def forward_with_cache(
    model: TrainableModel, full_img: ImageU8, working_img: ImageU8
) -> ForwardCache:
    """
    Runs the network path in float64, keeping intermediate values.

    `output` is the (P, 3) interpolation result clamped to [0, 1];
    `inside` marks the samples that were strictly inside before clamping.
    """
    traces = []
    pooled = np.zeros(model.config.channels)
    for branch, plane in zip(model.branches, branch_planes(working_img, model.config)):
        trace = branch.trace(branch_rows(plane, model.config))
        pooled += trace.output.mean(axis=0)
        traces.append(trace)
    weights = predict_weights(model.head, pooled)
    fused = fuse_luts(model.basis, weights)
    plan = trilinear_plan(full_img.to_unit().reshape(-1, 3), model.config.bins)
    raw = apply_plan(plan, fused.table)
    inside = (raw > 0.0) & (raw < 1.0)
    return ForwardCache(traces, pooled, weights, plan, np.clip(raw, 0.0, 1.0), inside)


def loss_value(
    model: TrainableModel, full_img: ImageU8, working_img: ImageU8, target: Target
) -> float:
    """The L1 loss `loss_and_gradients` differentiates, in float64."""
    cache = forward_with_cache(model, full_img, working_img)
    return float(np.abs(cache.output - _flat_target(target, full_img)).mean())


def _flat_target(target: Target, full_img: ImageU8) -> np.ndarray:
    values = _target_unit(target)
    if values.shape != (full_img.height, full_img.width, 3):
        raise DimensionMismatch(
            f"Target shape {values.shape} does not match input "
            f"{full_img.width}x{full_img.height}."
        )
    return values.reshape(-1, 3)


def _branch_backward(
    branch: PointwiseBranch, trace: BranchTrace, grad_pooled: np.ndarray
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    rows = trace.inputs[0].shape[0]
    delta = np.broadcast_to(grad_pooled / rows, (rows, branch.out_width))
    grad_w: List[np.ndarray] = [np.empty(0)] * branch.layer_count
    grad_b: List[np.ndarray] = [np.empty(0)] * branch.layer_count
    for i in reversed(range(branch.layer_count)):
        if i < branch.layer_count - 1:
            delta = delta * (trace.pre_activations[i] > 0)
        grad_w[i] = delta.T @ trace.inputs[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ branch.weights[i]
    return grad_w, grad_b


def loss_and_gradients(
    model: TrainableModel, full_img: ImageU8, working_img: ImageU8, target: Target
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Computes the L1 loss and its gradient for every parameter.

    Args:
        model: The model.
        full_img: Image the fused lattice is applied to.
        working_img: Downsampled copy feeding the branches.
        target: Expected output, same size as `full_img`.

    Returns:
        (loss, gradients) where gradients share keys and shapes with
        `model.parameters()`.

    Raises:
        DimensionMismatch: If target and input sizes differ.
    """
    target_flat = _flat_target(target, full_img)
    cache = forward_with_cache(model, full_img, working_img)
    residual = cache.output - target_flat
    loss = float(np.abs(residual).mean())

    # d loss / d output; subgradient 0 at a zero residual and on the clamp
    grad_out = np.sign(residual) * cache.inside / residual.size

    bins = model.config.bins
    grad_fused = np.zeros((bins ** 3, 3))
    for corner in range(8):
        np.add.at(
            grad_fused,
            cache.plan.indices[:, corner],
            cache.plan.weights[:, corner, None] * grad_out,
        )

    basis = model.basis
    grad_basis = cache.weights[:, None] * grad_fused.reshape(1, -1)
    grad_basis = grad_basis.reshape(basis.shape)
    grad_weights = basis.reshape(basis.shape[0], -1) @ grad_fused.ravel()

    head = model.head
    groups = head.split(cache.pooled)
    grad_head_w = grad_weights[None, :, None] * groups[:, None, :]
    grad_head_b = np.broadcast_to(grad_weights, head.biases.shape).copy()
    grad_pooled = np.einsum("knl,n->kl", head.weights, grad_weights).reshape(-1)

    grads: Dict[str, np.ndarray] = {}
    for name, branch, trace in zip(branch_names(model.config), model.branches, cache.traces):
        grad_w, grad_b = _branch_backward(branch, trace, grad_pooled)
        for i in range(branch.layer_count):
            grads[f"{name}.w{i}"] = grad_w[i]
            grads[f"{name}.b{i}"] = grad_b[i]
    grads["head.w"] = grad_head_w
    grads["head.b"] = grad_head_b
    grads["basis"] = grad_basis
    return loss, grads


def compute_gradients(
    model: TrainableModel, full_img: ImageU8, working_img: ImageU8, target: Target
) -> Dict[str, np.ndarray]:
    """Gradient of the L1 loss with respect to every model parameter."""
    return loss_and_gradients(model, full_img, working_img, target)[1]
