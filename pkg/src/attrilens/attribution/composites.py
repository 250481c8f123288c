"""Composites map layers to rules; canonizers rewrite models into a
rule-friendly form first.

A composite is an ordered list of (predicate, rule factory) pairs; the
first matching predicate wins. Layers no pair matches fall back to Pass
(activations, reshapes, identity batch-norm) or Norm (pooling); an
unmatched parameterized layer is an error, never a silent skip.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .. import nn
from .. import tensor as T
from ..errors import InvalidBounds, OrphanBatchNorm, UnknownComposite, UnmappedLayer
from ..tensor import Tensor
from .rules import RuleSpec

Predicate = Callable[[int, nn.Layer, nn.Model], bool]
RuleFactory = Callable[[], RuleSpec]

_PASS_KINDS = {"ReLU", "Flatten"}
_POOL_KINDS = {"MaxPool2D", "AvgPool2D"}


def _is_identity_bn(layer: nn.Layer) -> bool:
    if layer.kind != "BatchNorm":
        return False
    p = layer.params
    return (
        layer.eps_bn == 0.0
        and not np.any(p["mean"].data)
        and np.all(p["var"].data == 1)
        and np.all(p["scale"].data == 1)
        and not np.any(p["shift"].data)
    )


class Composite:
    def __init__(self, module_map: Sequence[tuple[Predicate, RuleFactory]], canonizers=()):
        self.module_map = list(module_map)
        self.canonizers = list(canonizers)

    def resolve(self, model: nn.Model) -> list[RuleSpec]:
        """Per-layer rules; first matching map entry wins, then fallbacks."""
        rules = []
        for i, layer in enumerate(model.layers):
            for pred, make in self.module_map:
                if pred(i, layer, model):
                    rules.append(make())
                    break
            else:
                if layer.kind in _PASS_KINDS or _is_identity_bn(layer):
                    rules.append(RuleSpec("Pass"))
                elif layer.kind in _POOL_KINDS:
                    rules.append(RuleSpec("Norm"))
                else:
                    raise UnmappedLayer(layer.name)
        return rules


class MergeBatchNorm:
    """Folds inference batch-norm into the preceding Linear/Conv2D layer.

    apply() returns a rewritten copy and keeps the original model so
    restore() can hand it back untouched.
    """

    def __init__(self):
        self._original: Optional[nn.Model] = None

    def apply(self, model: nn.Model) -> nn.Model:
        self._original = model
        return canonize_merge_batchnorm(model)

    def restore(self) -> nn.Model:
        if self._original is None:
            raise RuntimeError("restore() before apply()")
        out, self._original = self._original, None
        return out


def canonize_merge_batchnorm(model: nn.Model) -> nn.Model:
    """New model with every BatchNorm merged into the layer before it.

    The merged normalization becomes W' = (gamma/sqrt(var+eps)) * W per
    output channel and b' = (b - mean) * gamma/sqrt(var+eps) + shift;
    the BatchNorm itself is replaced by identity statistics so shapes
    and layer names stay stable.
    """
    out = model.copy()
    for i, layer in enumerate(out.layers):
        if layer.kind != "BatchNorm":
            continue
        if i == 0 or out.layers[i - 1].kind not in ("Linear", "Conv2D"):
            raise OrphanBatchNorm(layer.name)
        host = out.layers[i - 1]
        p = layer.params
        scale = (p["scale"].data / np.sqrt(p["var"].data + layer.eps_bn)).astype(np.float64)
        W, b = host.params["W"], host.params["b"]
        shape = (-1, 1) if host.kind == "Linear" else (-1, 1, 1, 1)
        W2 = W.data * scale.reshape(shape).astype(W.data.dtype)
        b2 = (b.data - p["mean"].data) * scale + p["shift"].data
        out.layers[i - 1] = host.replace_params(
            W=Tensor(W2, dtype=W.dtype), b=Tensor(b2, dtype=b.dtype)
        )
        n = p["mean"].shape[0]
        out.layers[i] = nn.batchnorm(
            layer.name,
            T.zeros((n,), p["mean"].dtype),
            T.ones((n,), p["var"].dtype),
            T.ones((n,), p["scale"].dtype),
            T.zeros((n,), p["shift"].dtype),
            eps=0.0,
        )
    return out


class RuleAssignment:
    """A composite resolved against a (privately canonized) model."""

    def __init__(self, original: nn.Model, canonized: nn.Model, rules: list[RuleSpec], canonizers):
        self.original = original
        self.model = canonized
        self.rules = rules
        self._canonizers = canonizers
        self.active = True


def register(model: nn.Model, composite: Composite) -> RuleAssignment:
    canonized = model
    applied = []
    for canonizer in composite.canonizers:
        canonized = canonizer.apply(canonized)
        applied.append(canonizer)
    rules = composite.resolve(canonized)
    return RuleAssignment(model, canonized, rules, applied)


def remove(assignment: RuleAssignment) -> nn.Model:
    """Deactivate the assignment; the original model was never mutated."""
    for canonizer in reversed(assignment._canonizers):
        canonizer.restore()
    assignment.active = False
    return assignment.original


def _is_weighted(layer: nn.Layer) -> bool:
    return layer.kind in ("Linear", "Conv2D")


def composite_epsilon_gamma_box(
    low=-3.0, high=3.0, gamma: float = 0.25, eps: float = 1e-6, canonizers=()
) -> Composite:
    """Box rule on the first weighted layer, gamma on other convolutions,
    epsilon on dense layers."""
    lo = np.asarray(low.data if isinstance(low, Tensor) else low, dtype=np.float64)
    hi = np.asarray(high.data if isinstance(high, Tensor) else high, dtype=np.float64)
    if not np.all(lo < hi):
        raise InvalidBounds("low must be strictly below high")

    def is_first_weighted(i, layer, model):
        return _is_weighted(layer) and not any(_is_weighted(l) for l in model.layers[:i])

    return Composite(
        [
            (is_first_weighted, lambda: RuleSpec("ZBox", low=low, high=high)),
            (lambda i, l, m: l.kind == "Conv2D", lambda: RuleSpec("Gamma", gamma=gamma, eps=eps)),
            (lambda i, l, m: l.kind == "Linear", lambda: RuleSpec("Epsilon", eps=eps)),
        ],
        canonizers=canonizers,
    )


def composite_uniform(rule_factory: RuleFactory, canonizers=()) -> Composite:
    """One rule for every weighted layer, fallbacks elsewhere."""
    return Composite([(lambda i, l, m: _is_weighted(l), rule_factory)], canonizers=canonizers)


def composite_guided_backprop(canonizers=()) -> Composite:
    return Composite(
        [
            (lambda i, l, m: l.kind == "ReLU", lambda: RuleSpec("GuidedReLU")),
            (lambda i, l, m: _is_weighted(l), lambda: RuleSpec("Norm")),
        ],
        canonizers=canonizers,
    )


def make_composite(name: str, **kwargs) -> Composite:
    """Composites by wire name, as used by the command line."""
    if name == "epsilon-gamma-box":
        return composite_epsilon_gamma_box(**kwargs)
    if name == "epsilon":
        eps = kwargs.pop("eps", 1e-6)
        return composite_uniform(lambda: RuleSpec("Epsilon", eps=eps), **kwargs)
    if name in ("zplus", "excitation-backprop"):
        return composite_uniform(lambda: RuleSpec("ZPlus"), **kwargs)
    if name == "guided-backprop":
        return composite_guided_backprop(**kwargs)
    raise UnknownComposite(f"no composite named {name!r}")


COMPOSITE_NAMES = ("epsilon-gamma-box", "epsilon", "zplus", "excitation-backprop", "guided-backprop")
