"""Attributors: strategies that turn a model + input into a relevance map.

The gradient attributor optionally runs under a composite, in which case
the backward pass is the rule-based one instead of the true gradient.
SmoothGrad composes with a composite too; integrated gradients and
occlusion are gradient/perturbation methods that do not.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .. import nn
from .. import tensor as T
from ..errors import ShapeMismatch
from ..rng import derive_seed
from ..tensor import Tensor
from .composites import Composite, RuleAssignment, register, remove
from .rules import rule_backward


class AttributionResult:
    """Model output plus an input-shaped relevance map."""

    __slots__ = ("output", "relevance")

    def __init__(self, output: Tensor, relevance: Tensor):
        self.output = output
        self.relevance = relevance

    def __iter__(self):
        return iter((self.output, self.relevance))


def relevance_backward(
    assignment: RuleAssignment, trace: nn.ForwardTrace, relevance_at_output: Tensor, collect: bool = False
):
    """Run the per-layer rules from output to input.

    With collect=True returns the relevance at every layer boundary,
    output end first; otherwise just the input relevance.
    """
    model = assignment.model
    r = relevance_at_output
    stages = [r]
    for i in reversed(range(len(model.layers))):
        r = rule_backward(model.layers[i], trace.inputs[i], r, assignment.rules[i])
        stages.append(r)
    return stages if collect else r


def _check_seed_relevance(out: Tensor, relevance_at_output: Tensor):
    if relevance_at_output.shape != out.shape:
        raise ShapeMismatch(
            f"relevance_at_output {relevance_at_output.shape} vs output {out.shape}"
        )


def attribute_gradient(
    model: nn.Model,
    composite: Optional[Composite],
    x: Tensor,
    relevance_at_output: Tensor,
    times_input: bool = False,
) -> AttributionResult:
    if composite is None:
        out, trace = nn.forward(model, x)
        _check_seed_relevance(out, relevance_at_output)
        grad = nn.backward_vjp(model, trace, relevance_at_output)
        if times_input:
            grad = grad * x
        return AttributionResult(out, grad)
    if times_input:
        raise ValueError("times_input only applies to the plain gradient")
    assignment = register(model, composite)
    try:
        out, trace = nn.forward(assignment.model, x)
        _check_seed_relevance(out, relevance_at_output)
        rel = relevance_backward(assignment, trace, relevance_at_output)
        return AttributionResult(out, rel)
    finally:
        remove(assignment)


def attribute_smoothgrad(
    model: nn.Model,
    composite: Optional[Composite],
    x: Tensor,
    relevance_at_output: Tensor,
    n: int = 16,
    noise_rel: float = 0.1,
    seed: int = 0,
) -> AttributionResult:
    """Mean attribution over n noisy copies of x.

    Noise is Gaussian with sigma = noise_rel * (max(x) - min(x)). The
    reported output is the clean forward pass.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if noise_rel < 0:
        raise ValueError("noise_rel must be >= 0")
    clean = attribute_gradient(model, composite, x, relevance_at_output)
    if noise_rel == 0.0:
        return clean
    sigma = noise_rel * (x.max() - float(x.data.min()))
    rng = np.random.default_rng(derive_seed(seed, "smoothgrad"))
    acc = np.zeros(x.shape, dtype=np.float64)
    for _ in range(n):
        noisy = Tensor((x.data + rng.normal(0.0, sigma, size=x.shape)).astype(x.data.dtype))
        acc += attribute_gradient(model, composite, noisy, relevance_at_output).relevance.data
    rel = Tensor((acc / n).astype(x.data.dtype))
    return AttributionResult(clean.output, rel)


def attribute_integrated_gradients(
    model: nn.Model,
    x: Tensor,
    baseline: Tensor,
    relevance_at_output: Tensor,
    steps: int = 64,
) -> AttributionResult:
    """Midpoint-rule path integral of the gradient from baseline to x."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if baseline.shape != x.shape:
        raise ShapeMismatch(f"baseline {baseline.shape} vs input {x.shape}")
    delta = x.data - baseline.data
    acc = np.zeros(x.shape, dtype=np.float64)
    out = None
    for t in range(1, steps + 1):
        pt = Tensor((baseline.data + (t - 0.5) / steps * delta).astype(x.data.dtype))
        res = attribute_gradient(model, None, pt, relevance_at_output)
        acc += res.relevance.data
    out, _ = nn.forward(model, x)
    rel = Tensor((delta * (acc / steps)).astype(x.data.dtype))
    return AttributionResult(out, rel)


def attribute_occlusion(
    model: nn.Model,
    x: Tensor,
    class_index: int,
    window,
    stride,
    fill: float = 0.0,
) -> AttributionResult:
    """Score drop per occluded window, averaged over overlapping windows.

    Works on (C,H,W) inputs (the window masks all channels) and on flat
    vectors (the window slides along the single axis).
    """
    out, _ = nn.forward(model, x)
    if not 0 <= class_index < out.size:
        raise ShapeMismatch(f"class {class_index} outside output of size {out.size}")
    base = float(out.data.reshape(-1)[class_index])

    acc = np.zeros(x.shape, dtype=np.float64)
    cnt = np.zeros(x.shape, dtype=np.int64)

    def drop(patched: np.ndarray) -> float:
        y, _ = nn.forward(model, Tensor(patched.astype(x.data.dtype)))
        return base - float(y.data.reshape(-1)[class_index])

    if x.ndim == 1:
        k = int(window)
        s = int(stride)
        if k > x.shape[0]:
            raise ShapeMismatch(f"window {k} exceeds input {x.shape[0]}")
        for i in range(0, x.shape[0] - k + 1, s):
            patched = x.data.copy()
            patched[i : i + k] = fill
            d = drop(patched)
            acc[i : i + k] += d
            cnt[i : i + k] += 1
    elif x.ndim == 3:
        kh, kw = T._pair(window)
        sh, sw = T._pair(stride)
        _, h, w = x.shape
        if kh > h or kw > w:
            raise ShapeMismatch(f"window {kh}x{kw} exceeds input {h}x{w}")
        for i in range(0, h - kh + 1, sh):
            for j in range(0, w - kw + 1, sw):
                patched = x.data.copy()
                patched[:, i : i + kh, j : j + kw] = fill
                d = drop(patched)
                acc[:, i : i + kh, j : j + kw] += d
                cnt[:, i : i + kh, j : j + kw] += 1
    else:
        raise ShapeMismatch(f"occlusion needs a 1-d or 3-d input, got {x.shape}")

    rel = np.divide(acc, cnt, out=np.zeros_like(acc), where=cnt > 0)
    return AttributionResult(out, Tensor(rel.astype(x.data.dtype)))


class _Attributor:
    """Context-manager face shared by the attributor classes."""

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


class Gradient(_Attributor):
    def __init__(self, model: nn.Model, composite: Optional[Composite] = None, times_input: bool = False):
        self.model = model
        self.composite = composite
        self.times_input = times_input

    def __call__(self, x: Tensor, relevance_at_output: Tensor) -> AttributionResult:
        return attribute_gradient(self.model, self.composite, x, relevance_at_output, self.times_input)


class SmoothGrad(_Attributor):
    def __init__(self, model, composite=None, n=16, noise_rel=0.1, seed=0):
        self.model = model
        self.composite = composite
        self.n = n
        self.noise_rel = noise_rel
        self.seed = seed

    def __call__(self, x, relevance_at_output):
        return attribute_smoothgrad(
            self.model, self.composite, x, relevance_at_output, self.n, self.noise_rel, self.seed
        )


class IntegratedGradients(_Attributor):
    def __init__(self, model, baseline=None, steps=64):
        self.model = model
        self.baseline = baseline
        self.steps = steps

    def __call__(self, x, relevance_at_output):
        baseline = self.baseline if self.baseline is not None else T.zeros(x.shape, x.dtype)
        return attribute_integrated_gradients(self.model, x, baseline, relevance_at_output, self.steps)


class Occlusion(_Attributor):
    def __init__(self, model, window, stride, fill=0.0):
        self.model = model
        self.window = window
        self.stride = stride
        self.fill = fill

    def __call__(self, x, class_index: int):
        return attribute_occlusion(self.model, x, class_index, self.window, self.stride, self.fill)
