"""Feed-forward models: layers, forward traces, exact VJPs, a small SGD
trainer for the demo classifier, and the on-disk weight format.

Layers are plain records; a model is an ordered list of them plus the
expected input shape. The forward pass records every layer's input and
output (and max-pool argmax routes) so relevance rules can replay it.
"""

from __future__ import annotations

import copy
import json
import math
import os
from pathlib import Path
from typing import Optional

import numpy as np

from . import blob
from . import tensor as T
from .errors import FormatError, ShapeMismatch, TraceMismatch
from .rng import derive_seed
from .tensor import Tensor

LAYER_KINDS = ("Linear", "Conv2D", "ReLU", "MaxPool2D", "AvgPool2D", "Flatten", "BatchNorm")


class Layer:
    """One model stage. `params` holds the layer's tensors by role name."""

    def __init__(self, kind, name, params=None, stride=None, pad=None, window=None, eps_bn=None):
        if kind not in LAYER_KINDS:
            raise FormatError(f"unknown layer kind {kind!r}")
        self.kind = kind
        self.name = name
        self.params: dict[str, Tensor] = dict(params or {})
        self.stride = stride
        self.pad = pad
        self.window = window
        self.eps_bn = eps_bn
        self._validate()

    def _validate(self):
        p = self.params
        if self.kind == "Linear":
            if p["W"].ndim != 2 or p["b"].shape != (p["W"].shape[0],):
                raise ShapeMismatch(f"linear layer {self.name!r}: W {p['W'].shape}, b {p['b'].shape}")
        elif self.kind == "Conv2D":
            if p["W"].ndim != 4 or p["b"].shape != (p["W"].shape[0],):
                raise ShapeMismatch(f"conv layer {self.name!r}: W {p['W'].shape}, b {p['b'].shape}")
        elif self.kind == "BatchNorm":
            shapes = {p[k].shape for k in ("mean", "var", "scale", "shift")}
            if len(shapes) != 1:
                raise ShapeMismatch(f"batch-norm layer {self.name!r}: param shapes {shapes}")
        elif self.kind in ("MaxPool2D", "AvgPool2D") and self.window is None:
            raise ShapeMismatch(f"pool layer {self.name!r} needs a window")

    def replace_params(self, **updates) -> "Layer":
        merged = dict(self.params)
        merged.update(updates)
        return Layer(self.kind, self.name, merged, self.stride, self.pad, self.window, self.eps_bn)


def linear(name: str, W: Tensor, b: Tensor) -> Layer:
    return Layer("Linear", name, {"W": W, "b": b})


def conv2d(name: str, W: Tensor, b: Tensor, stride=1, pad=0) -> Layer:
    return Layer("Conv2D", name, {"W": W, "b": b}, stride=stride, pad=pad)


def relu(name: str) -> Layer:
    return Layer("ReLU", name)


def maxpool2d(name: str, window, stride=None) -> Layer:
    return Layer("MaxPool2D", name, window=window, stride=stride)


def avgpool2d(name: str, window, stride=None) -> Layer:
    return Layer("AvgPool2D", name, window=window, stride=stride)


def flatten(name: str) -> Layer:
    return Layer("Flatten", name)


def batchnorm(name: str, mean: Tensor, var: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Layer:
    return Layer(
        "BatchNorm", name, {"mean": mean, "var": var, "scale": scale, "shift": shift}, eps_bn=eps
    )


class Model:
    def __init__(self, layers: list[Layer], input_shape):
        names = [l.name for l in layers]
        if len(set(names)) != len(names):
            raise ShapeMismatch(f"duplicate layer names in {names}")
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)

    def layer(self, name: str) -> Layer:
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(name)

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def _layer_output_shape(layer: Layer, in_shape: tuple) -> tuple:
    k = layer.kind
    if k == "Linear":
        W = layer.params["W"]
        if in_shape != (W.shape[1],):
            raise ShapeMismatch(f"{layer.name!r}: input {in_shape}, W expects ({W.shape[1]},)")
        return (W.shape[0],)
    if k == "Conv2D":
        W = layer.params["W"]
        if len(in_shape) != 3 or in_shape[0] != W.shape[1]:
            raise ShapeMismatch(f"{layer.name!r}: input {in_shape}, kernel {W.shape}")
        return T.conv2d_output_shape(in_shape, W.shape, layer.stride or 1, layer.pad or 0)
    if k in ("MaxPool2D", "AvgPool2D"):
        if len(in_shape) != 3:
            raise ShapeMismatch(f"{layer.name!r}: pooling needs (C,H,W), got {in_shape}")
        return T.pool_output_shape(in_shape, layer.window, layer.stride)
    if k == "Flatten":
        return (int(np.prod(in_shape)),)
    if k == "BatchNorm":
        n = layer.params["mean"].shape[0]
        if in_shape[0] != n:
            raise ShapeMismatch(f"{layer.name!r}: {n} stats for input {in_shape}")
        return in_shape
    return in_shape  # ReLU


def infer_shapes(model: Model) -> list[tuple]:
    """Output shape after each layer; raises if consecutive layers clash."""
    shapes = []
    cur = model.input_shape
    for layer in model.layers:
        cur = _layer_output_shape(layer, cur)
        shapes.append(cur)
    return shapes


def _bn_stats(layer: Layer, ndim: int):
    """Broadcastable (scale, offset) pair for inference batch-norm."""
    p = layer.params
    inv = 1.0 / np.sqrt(p["var"].data + layer.eps_bn)
    scale = p["scale"].data * inv
    shift = p["shift"].data - p["mean"].data * scale
    if ndim == 3:
        return scale[:, None, None], shift[:, None, None]
    return scale, shift


def _layer_forward(layer: Layer, x: Tensor):
    """Returns (output, aux). aux is the argmax array for MaxPool2D."""
    k = layer.kind
    if k == "Linear":
        return T.matmul(layer.params["W"], x) + layer.params["b"], None
    if k == "Conv2D":
        return T.conv2d(x, layer.params["W"], layer.params["b"], layer.stride or 1, layer.pad or 0), None
    if k == "ReLU":
        return T.relu(x), None
    if k == "MaxPool2D":
        return T.maxpool2d(x, layer.window, layer.stride)
    if k == "AvgPool2D":
        return T.avgpool2d(x, layer.window, layer.stride), None
    if k == "Flatten":
        return x.reshape((x.size,)), None
    scale, shift = _bn_stats(layer, x.ndim)
    return Tensor((x.data * scale + shift).astype(x.data.dtype, copy=False)), None


class ForwardTrace:
    """Per-layer record of one forward pass, consumed by VJPs and rules."""

    def __init__(self, model: Model, inputs, outputs, aux):
        self._model = model
        self.inputs = inputs
        self.outputs = outputs
        self.aux = aux

    def check(self, model: Model):
        if self._model is not model or len(self.inputs) != len(model.layers):
            raise TraceMismatch("trace was not produced by forward() on this model")


def forward(model: Model, x: Tensor) -> tuple[Tensor, ForwardTrace]:
    if x.shape != model.input_shape:
        raise ShapeMismatch(f"input {x.shape}, model expects {model.input_shape}")
    inputs, outputs, aux = [], [], []
    cur = x
    for layer in model.layers:
        inputs.append(cur)
        cur, a = _layer_forward(layer, cur)
        outputs.append(cur)
        aux.append(a)
    return cur, ForwardTrace(model, inputs, outputs, aux)


def _pool_geometry(layer: Layer):
    kh, kw = T._pair(layer.window)
    if layer.stride is None:
        return (kh, kw), (kh, kw)
    return (kh, kw), T._pair(layer.stride)


def layer_input_vjp(layer: Layer, x: Tensor, g: Tensor, aux=None) -> Tensor:
    """Gradient of (layer output · g) with respect to the layer input."""
    k = layer.kind
    if k == "Linear":
        return Tensor(layer.params["W"].data.T @ g.data)
    if k == "Conv2D":
        return T.conv2d_input_vjp(g, layer.params["W"], layer.stride or 1, layer.pad or 0, input_shape=x.shape)
    if k == "ReLU":
        return Tensor(g.data * (x.data > 0))
    if k == "MaxPool2D":
        (kh, kw), (sh, sw) = _pool_geometry(layer)
        c, ho, wo = g.shape
        gx = np.zeros(x.shape, dtype=g.data.dtype)
        ci, ii, ji = np.indices((c, ho, wo))
        rows = ii * sh + aux[..., 0]
        cols = ji * sw + aux[..., 1]
        np.add.at(gx, (ci, rows, cols), g.data)
        return Tensor(gx)
    if k == "AvgPool2D":
        (kh, kw), (sh, sw) = _pool_geometry(layer)
        c, ho, wo = g.shape
        gx = np.zeros(x.shape, dtype=g.data.dtype)
        share = g.data / (kh * kw)
        for a in range(kh):
            for b in range(kw):
                gx[:, a : a + sh * (ho - 1) + 1 : sh, b : b + sw * (wo - 1) + 1 : sw] += share
        return Tensor(gx)
    if k == "Flatten":
        return g.reshape(x.shape)
    # BatchNorm: affine map, so the VJP is just the channel scale.
    scale, _ = _bn_stats(layer, x.ndim)
    return Tensor((g.data * scale).astype(g.data.dtype, copy=False))


def backward_vjp(model: Model, trace: ForwardTrace, grad_out: Tensor) -> Tensor:
    trace.check(model)
    if grad_out.shape != trace.outputs[-1].shape:
        raise TraceMismatch(f"grad_out {grad_out.shape} vs output {trace.outputs[-1].shape}")
    g = grad_out
    for i in reversed(range(len(model.layers))):
        g = layer_input_vjp(model.layers[i], trace.inputs[i], g, trace.aux[i])
    return g


def _layer_param_grads(layer: Layer, x: Tensor, g: Tensor) -> dict[str, np.ndarray]:
    if layer.kind == "Linear":
        return {"W": np.outer(g.data, x.data), "b": g.data.copy()}
    if layer.kind == "Conv2D":
        W = layer.params["W"]
        _, _, kh, kw = W.shape
        sh, sw = T._pair(layer.stride or 1)
        ph, pw = T._pair(layer.pad or 0)
        xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
        from numpy.lib.stride_tricks import sliding_window_view

        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
        # dW[o,c,a,b] = sum_{i,j} g[o,i,j] win[c,i,j,a,b]
        dW = np.tensordot(g.data, win, axes=([1, 2], [1, 2]))
        return {"W": dW, "b": g.data.sum(axis=(1, 2))}
    return {}


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def he_uniform_init(model: Model, seed: int) -> Model:
    """Fresh weights for every Linear/Conv2D layer, zero biases.

    Each layer draws from its own splitmix-derived stream so inserting a
    layer does not shift the others' weights.
    """
    out = model.copy()
    for i, layer in enumerate(out.layers):
        if layer.kind not in ("Linear", "Conv2D"):
            continue
        W = layer.params["W"]
        fan_in = W.shape[1] if layer.kind == "Linear" else int(np.prod(W.shape[1:]))
        limit = math.sqrt(6.0 / fan_in)
        rng = np.random.default_rng(derive_seed(seed, "init", layer.name))
        fresh = rng.uniform(-limit, limit, size=W.shape)
        out.layers[i] = layer.replace_params(
            W=Tensor(fresh, dtype=W.dtype),
            b=T.zeros(layer.params["b"].shape, layer.params["b"].dtype),
        )
    return out


def train_sgd(
    model: Model,
    dataset: Tensor,
    labels: Tensor,
    epochs: int,
    lr: float,
    batch: int,
    seed: int,
) -> tuple[Model, float]:
    """Softmax cross-entropy SGD on a private copy of the model.

    Returns the trained copy and its final full-train-set accuracy.
    Deterministic given the seed.
    """
    if dataset.shape[0] != labels.shape[0]:
        raise ShapeMismatch(f"{dataset.shape[0]} samples but {labels.shape[0]} labels")
    if dataset.shape[1:] != model.input_shape:
        raise ShapeMismatch(f"sample shape {dataset.shape[1:]}, model expects {model.input_shape}")
    last = model.layers[-1]
    if last.kind != "Linear":
        raise ShapeMismatch("model must end in a Linear layer over class logits")
    n_classes = last.params["W"].shape[0]
    y = labels.data.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ShapeMismatch(f"labels outside [0, {n_classes})")

    trained = model.copy()
    n = dataset.shape[0]
    rng = np.random.default_rng(derive_seed(seed, "sgd"))
    samples = [Tensor(dataset.data[i]) for i in range(n)]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            grads: dict[str, dict[str, np.ndarray]] = {}
            for i in idx:
                out, trace = forward(trained, samples[i])
                p = _softmax(out.data.astype(np.float64))
                gz = p.copy()
                gz[y[i]] -= 1.0
                g = Tensor(gz.astype(out.data.dtype))
                for li in reversed(range(len(trained.layers))):
                    layer = trained.layers[li]
                    pg = _layer_param_grads(layer, trace.inputs[li], g)
                    if pg:
                        acc = grads.setdefault(layer.name, {})
                        for k, v in pg.items():
                            acc[k] = acc.get(k, 0) + v
                    if li:
                        g = layer_input_vjp(layer, trace.inputs[li], g, trace.aux[li])
            scale = lr / len(idx)
            for li, layer in enumerate(trained.layers):
                if layer.name not in grads:
                    continue
                updates = {
                    k: Tensor(layer.params[k].data - scale * gv, dtype=layer.params[k].dtype)
                    for k, gv in grads[layer.name].items()
                }
                trained.layers[li] = layer.replace_params(**updates)

    correct = 0
    for i in range(n):
        out, _ = forward(trained, samples[i])
        correct += int(out.argmax()) == y[i]
    return trained, correct / n if n else 0.0


def predict_logits(model: Model, dataset: Tensor) -> Tensor:
    rows = []
    for i in range(dataset.shape[0]):
        out, _ = forward(model, Tensor(dataset.data[i]))
        rows.append(out.data)
    return Tensor(np.stack(rows), dtype="f32") if rows else T.zeros((0, 0), "f32")


# -- weight files -----------------------------------------------------

_PARAM_ROLES = {
    "Linear": ("W", "b"),
    "Conv2D": ("W", "b"),
    "BatchNorm": ("mean", "var", "scale", "shift"),
}


def save_model(path: str | os.PathLike, model: Model) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    layers = []
    for layer in model.layers:
        entry: dict = {"kind": layer.kind, "name": layer.name}
        if layer.params:
            entry["params"] = {}
            for role in _PARAM_ROLES[layer.kind]:
                fname = f"{layer.name}.{role}.vzt"
                blob.write_blob(root / fname, layer.params[role])
                entry["params"][role] = fname
        if layer.stride is not None:
            entry["stride"] = list(T._pair(layer.stride))
        if layer.pad is not None:
            entry["pad"] = list(T._pair(layer.pad))
        if layer.window is not None:
            entry["window"] = list(T._pair(layer.window))
        if layer.eps_bn is not None:
            entry["eps_bn"] = layer.eps_bn
        layers.append(entry)
    manifest = {"input_shape": list(model.input_shape), "layers": layers}
    (root / "model.json").write_text(json.dumps(manifest, indent=2))


def load_model(path: str | os.PathLike) -> Model:
    root = Path(path)
    try:
        manifest = json.loads((root / "model.json").read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"model.json is not valid JSON: {e}") from e
    if "input_shape" not in manifest or "layers" not in manifest:
        raise FormatError("model.json missing input_shape or layers")
    layers = []
    for entry in manifest["layers"]:
        kind = entry.get("kind")
        if kind not in LAYER_KINDS:
            raise FormatError(f"unknown layer kind {kind!r}")
        params = {}
        for role, fname in entry.get("params", {}).items():
            params[role] = blob.read_blob(root / fname)
        expected = set(_PARAM_ROLES.get(kind, ()))
        if set(params) != expected:
            raise FormatError(
                f"layer {entry.get('name')!r}: params {sorted(params)}, expected {sorted(expected)}"
            )
        try:
            layers.append(
                Layer(
                    kind,
                    entry.get("name", ""),
                    params,
                    stride=entry.get("stride"),
                    pad=entry.get("pad"),
                    window=entry.get("window"),
                    eps_bn=entry.get("eps_bn"),
                )
            )
        except ShapeMismatch as e:
            raise FormatError(str(e)) from e
    model = Model(layers, manifest["input_shape"])
    infer_shapes(model)  # consecutive layers must compose
    return model
