"""Relevance propagation rules.

Each rule redistributes a layer's output relevance onto its input. The
parameter-modifying rules (epsilon, gamma, flat, w-square) share one
template: modify weights/bias/input, divide relevance by the modified
pre-activation, and pull it back through the modified layer transpose.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .. import nn
from .. import tensor as T
from ..errors import InvalidBounds, ShapeMismatch, UnsupportedLayerForRule
from ..tensor import Tensor

RULE_KINDS = (
    "Epsilon",
    "Gamma",
    "ZBox",
    "AlphaBeta",
    "ZPlus",
    "Flat",
    "WSquare",
    "Pass",
    "Norm",
    "GuidedReLU",
)

_WEIGHTED = {"Epsilon", "Gamma", "ZBox", "AlphaBeta", "ZPlus", "Flat", "WSquare"}


class RuleSpec:
    """A rule kind plus its numeric knobs, validated at construction."""

    def __init__(
        self,
        kind: str,
        eps: float = 1e-6,
        gamma: float = 0.25,
        alpha: float = 1.0,
        beta: float = 0.0,
        low=None,
        high=None,
    ):
        if kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {kind!r}")
        if eps < 0 or gamma < 0:
            raise ValueError("eps and gamma must be >= 0")
        if kind == "AlphaBeta":
            if abs(alpha - beta - 1.0) > 1e-12 or alpha < 0 or beta < 0:
                raise ValueError(f"alpha={alpha}, beta={beta}: need alpha-beta=1, both >= 0")
        if kind == "ZBox":
            if low is None or high is None:
                raise InvalidBounds("ZBox needs low and high bounds")
            lo = np.asarray(low.data if isinstance(low, Tensor) else low, dtype=np.float64)
            hi = np.asarray(high.data if isinstance(high, Tensor) else high, dtype=np.float64)
            if np.any(lo > hi):
                raise InvalidBounds("low > high")
        self.kind = kind
        self.eps = float(eps)
        self.gamma = float(gamma)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.low = low
        self.high = high

    def __repr__(self):
        return f"RuleSpec({self.kind})"


def epsilon(eps: float = 1e-6) -> RuleSpec:
    return RuleSpec("Epsilon", eps=eps)


def gamma(g: float = 0.25, eps: float = 1e-6) -> RuleSpec:
    return RuleSpec("Gamma", gamma=g, eps=eps)


def zbox(low, high) -> RuleSpec:
    return RuleSpec("ZBox", low=low, high=high)


def alpha_beta(alpha: float, beta: float) -> RuleSpec:
    return RuleSpec("AlphaBeta", alpha=alpha, beta=beta)


def zplus() -> RuleSpec:
    return RuleSpec("ZPlus")


def flat() -> RuleSpec:
    return RuleSpec("Flat")


def w_square() -> RuleSpec:
    return RuleSpec("WSquare")


def pass_rule() -> RuleSpec:
    return RuleSpec("Pass")


def norm() -> RuleSpec:
    return RuleSpec("Norm")


def guided_relu() -> RuleSpec:
    return RuleSpec("GuidedReLU")


def _apply_linearlike(layer: nn.Layer, W: Tensor, b: Tensor, x: Tensor) -> Tensor:
    if layer.kind == "Linear":
        return T.matmul(W, x) + b
    return T.conv2d(x, W, b, layer.stride or 1, layer.pad or 0)


def _vjp_linearlike(layer: nn.Layer, W: Tensor, s: Tensor, in_shape) -> Tensor:
    if layer.kind == "Linear":
        return Tensor(W.data.T @ s.data)
    return T.conv2d_input_vjp(s, W, layer.stride or 1, layer.pad or 0, input_shape=in_shape)


def _expand_bound(bound, x: Tensor) -> Tensor:
    """Scalar, per-channel, or full-shape bounds, expanded to x's shape."""
    if isinstance(bound, (int, float)):
        return T.full(x.shape, bound, x.dtype)
    arr = bound.data
    if arr.shape == x.shape:
        return bound.astype(x.dtype)
    if x.ndim == 3 and arr.shape == (x.shape[0],):
        return Tensor(np.broadcast_to(arr[:, None, None], x.shape), dtype=x.dtype)
    raise ShapeMismatch(f"bounds shape {arr.shape} does not fit input {x.shape}")


def _modified_template(layer: nn.Layer, x: Tensor, R: Tensor, W: Tensor, b: Tensor, xm: Tensor, eps: float) -> Tensor:
    z = _apply_linearlike(layer, W, b, xm)
    s = T.div_stable(R, z, eps)
    return xm * _vjp_linearlike(layer, W, s, x.shape)


def _zbox_backward(layer: nn.Layer, x: Tensor, R: Tensor, rule: RuleSpec) -> Tensor:
    W, b = layer.params["W"], layer.params["b"]
    low = _expand_bound(rule.low, x)
    high = _expand_bound(rule.high, x)
    Wp, Wn = T.pos(W), T.neg(W)
    bp, bn = T.pos(b), T.neg(b)
    z = (
        _apply_linearlike(layer, W, b, x)
        - _apply_linearlike(layer, Wp, bp, low)
        - _apply_linearlike(layer, Wn, bn, high)
    )
    s = T.div_stable(R, z, 1e-9)
    return (
        x * _vjp_linearlike(layer, W, s, x.shape)
        - low * _vjp_linearlike(layer, Wp, s, x.shape)
        - high * _vjp_linearlike(layer, Wn, s, x.shape)
    )


def _alpha_beta_backward(layer: nn.Layer, x: Tensor, R: Tensor, alpha: float, beta: float) -> Tensor:
    W, b = layer.params["W"], layer.params["b"]
    xp, xn = T.pos(x), T.neg(x)
    Wp, Wn = T.pos(W), T.neg(W)
    zero_b = T.zeros(b.shape, b.dtype)
    # pos(x_i w_ij) splits as x+w+ + x-w-; neg as x+w- + x-w+
    zp = _apply_linearlike(layer, Wp, T.pos(b), xp) + _apply_linearlike(layer, Wn, zero_b, xn)
    zn = _apply_linearlike(layer, Wn, T.neg(b), xp) + _apply_linearlike(layer, Wp, zero_b, xn)
    sp = T.div_stable(R, zp, 1e-9) * alpha
    sn = T.div_stable(R, zn, 1e-9) * beta
    return xp * (
        _vjp_linearlike(layer, Wp, sp, x.shape) - _vjp_linearlike(layer, Wn, sn, x.shape)
    ) + xn * (
        _vjp_linearlike(layer, Wn, sp, x.shape) - _vjp_linearlike(layer, Wp, sn, x.shape)
    )


def rule_backward(layer: nn.Layer, layer_input: Tensor, relevance_out: Tensor, rule: RuleSpec) -> Tensor:
    """Redistribute relevance_out onto layer_input according to the rule."""
    kind = rule.kind
    x, R = layer_input, relevance_out

    if kind in _WEIGHTED:
        if layer.kind not in ("Linear", "Conv2D"):
            raise UnsupportedLayerForRule(f"{kind} rule on {layer.kind} layer {layer.name!r}")
        W, b = layer.params["W"], layer.params["b"]
        if kind == "Epsilon":
            return _modified_template(layer, x, R, W, b, x, rule.eps)
        if kind == "Gamma":
            Wm = W + T.pos(W) * rule.gamma
            bm = b + T.pos(b) * rule.gamma
            return _modified_template(layer, x, R, Wm, bm, x, rule.eps)
        if kind == "ZBox":
            return _zbox_backward(layer, x, R, rule)
        if kind == "AlphaBeta":
            return _alpha_beta_backward(layer, x, R, rule.alpha, rule.beta)
        if kind == "ZPlus":
            return _alpha_beta_backward(layer, x, R, 1.0, 0.0)
        if kind == "Flat":
            ones_W = T.ones(W.shape, W.dtype)
            return _modified_template(layer, x, R, ones_W, T.zeros(b.shape, b.dtype), T.ones(x.shape, x.dtype), rule.eps)
        # WSquare
        return _modified_template(layer, x, R, W * W, b * b, T.ones(x.shape, x.dtype), rule.eps)

    if kind == "Pass":
        if R.size != x.size:
            raise ShapeMismatch(f"Pass rule on {layer.name!r}: sizes {R.size} vs {x.size}")
        return R.reshape(x.shape)

    if kind == "Norm":
        aux = None
        if layer.kind == "MaxPool2D":
            _, aux = T.maxpool2d(x, layer.window, layer.stride)
        return nn.layer_input_vjp(layer, x, R, aux)

    # GuidedReLU
    if layer.kind != "ReLU":
        raise UnsupportedLayerForRule(f"GuidedReLU on {layer.kind} layer {layer.name!r}")
    gate = (x.data > 0) & (R.data > 0)
    return Tensor(R.data * gate)
