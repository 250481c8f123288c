"""Dense row-major tensors and the numeric kernels the toolkit builds on.

Tensors are immutable after construction and restricted to four element
kinds (f32, f64, i64, u8). Kernels are pure functions; mixing dtypes or
broadcasting anything other than scalar-vs-tensor or equal shapes is an
error, which keeps shape bugs loud.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DtypeMismatch, ShapeMismatch, UnsupportedDtype

DTYPES = {
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
    "i64": np.dtype(np.int64),
    "u8": np.dtype(np.uint8),
}
_NP_TO_DTYPE = {v: k for k, v in DTYPES.items()}

Scalar = Union[int, float]


class Tensor:
    """Immutable dense n-dimensional array with row-major contiguous data."""

    __slots__ = ("data", "dtype", "shape")

    def __init__(self, data, dtype: str | None = None):
        if isinstance(data, Tensor):
            arr = data.data
        else:
            arr = np.asarray(data)
        if dtype is not None:
            if dtype not in DTYPES:
                raise UnsupportedDtype(f"unsupported dtype {dtype!r}")
            arr = arr.astype(DTYPES[dtype])
        elif arr.dtype not in _NP_TO_DTYPE:
            # Python floats/ints arrive as float64/int64; anything else is
            # coerced to f64 so literals like [[1, 2.5]] behave sanely.
            if np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.integer):
                arr = arr.astype(np.float64)
            else:
                raise UnsupportedDtype(f"unsupported dtype {arr.dtype}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "dtype", _NP_TO_DTYPE[arr.dtype])
        object.__setattr__(self, "shape", tuple(arr.shape))

    def __setattr__(self, name, value):
        raise AttributeError("Tensor is immutable")

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def astype(self, dtype: str) -> "Tensor":
        return Tensor(self.data, dtype=dtype)

    def reshape(self, shape: Sequence[int]) -> "Tensor":
        if math.prod(shape) != self.size:
            raise ShapeMismatch(f"cannot reshape {self.shape} to {tuple(shape)}")
        return Tensor(self.data.reshape(shape))

    def tolist(self):
        return self.data.tolist()

    def item(self) -> Scalar:
        return self.data.item()

    def __getitem__(self, idx) -> "Tensor":
        return Tensor(np.asarray(self.data[idx]))

    def __repr__(self) -> str:
        return f"Tensor(dtype={self.dtype}, shape={self.shape})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tensor)
            and self.dtype == other.dtype
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.dtype, self.shape, self.data.tobytes()))

    # -- elementwise arithmetic (scalar or equal-shape only) ------------

    def __add__(self, other):
        return _binary(self, other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return _binary(self, other, np.subtract)

    def __rsub__(self, other):
        return _binary(_as_tensor_like(other, self), self, np.subtract)

    def __mul__(self, other):
        return _binary(self, other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return Tensor(-self.data)

    def sum(self) -> Scalar:
        return self.data.sum().item()

    def max(self) -> Scalar:
        return self.data.max().item()

    def argmax(self) -> int:
        """Flat row-major index of the first maximum."""
        return int(self.data.argmax())


def _as_tensor_like(value, ref: Tensor) -> Tensor:
    return Tensor(np.full(ref.shape, value, dtype=ref.data.dtype))


def _binary(a: Tensor, b, op) -> Tensor:
    if isinstance(b, (int, float)):
        return Tensor(op(a.data, a.data.dtype.type(b)))
    if not isinstance(b, Tensor):
        raise TypeError(f"expected Tensor or scalar, got {type(b).__name__}")
    if a.dtype != b.dtype:
        raise DtypeMismatch(f"{a.dtype} vs {b.dtype}")
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return Tensor(op(a.data, b.data))


def zeros(shape: Sequence[int], dtype: str = "f64") -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPES[dtype]))


def ones(shape: Sequence[int], dtype: str = "f64") -> Tensor:
    return Tensor(np.ones(shape, dtype=DTYPES[dtype]))


def full(shape: Sequence[int], value: Scalar, dtype: str = "f64") -> Tensor:
    return Tensor(np.full(shape, value, dtype=DTYPES[dtype]))


def _check_same_dtype(*tensors: Tensor):
    kinds = {t.dtype for t in tensors}
    if len(kinds) > 1:
        raise DtypeMismatch(f"mixed dtypes {sorted(kinds)}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-d x 2-d or 2-d x 1-d operands."""
    _check_same_dtype(a, b)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul needs 2-d x (1|2)-d, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner extents differ: {a.shape} x {b.shape}")
    return Tensor(a.data @ b.data)


def _pair(v) -> tuple[int, int]:
    if isinstance(v, Iterable) and not isinstance(v, (str, bytes)):
        h, w = v
        return int(h), int(w)
    return int(v), int(v)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=1, pad=0) -> Tensor:
    """Cross-correlation of x (C,H,W) with w (O,C,kh,kw) plus bias, zero padding."""
    _check_same_dtype(x, w, b)
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d needs (C,H,W) and (O,C,kh,kw), got {x.shape}, {w.shape}")
    o, c, kh, kw = w.shape
    if x.shape[0] != c:
        raise ShapeMismatch(f"channel mismatch: input {x.shape[0]}, kernel {c}")
    if b.shape != (o,):
        raise ShapeMismatch(f"bias shape {b.shape}, expected ({o},)")
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    _, h, wd = x.shape
    if kh > h + 2 * ph or kw > wd + 2 * pw:
        raise ShapeMismatch(f"kernel {kh}x{kw} exceeds padded input {h + 2 * ph}x{wd + 2 * pw}")
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    # win: (C, H', W', kh, kw); contract C, kh, kw against the kernel
    out = np.tensordot(w.data, win, axes=([1, 2, 3], [0, 3, 4]))
    out = out + b.data[:, None, None]
    return Tensor(out.astype(x.data.dtype, copy=False))


def conv2d_output_shape(input_shape, w_shape, stride=1, pad=0) -> tuple[int, int, int]:
    c, h, wd = input_shape
    o, _, kh, kw = w_shape
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    return o, (h + 2 * ph - kh) // sh + 1, (wd + 2 * pw - kw) // sw + 1


def conv2d_input_vjp(grad_out: Tensor, w: Tensor, stride=1, pad=0, input_shape=None) -> Tensor:
    """Vector-Jacobian product of conv2d wrt its input (a transposed convolution)."""
    _check_same_dtype(grad_out, w)
    if input_shape is None:
        raise ShapeMismatch("input_shape required")
    c, h, wd = input_shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeMismatch(f"kernel channels {cw} vs input_shape channels {c}")
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    expected = conv2d_output_shape(input_shape, w.shape, stride, pad)
    if grad_out.shape != expected:
        raise ShapeMismatch(f"grad_out shape {grad_out.shape}, expected {expected}")
    _, ho, wo = grad_out.shape
    gx = np.zeros((c, h + 2 * ph, wd + 2 * pw), dtype=grad_out.data.dtype)
    # t[c,a,b,i,j] = sum_o g[o,i,j] * w[o,c,a,b]; scatter per kernel offset
    t = np.tensordot(w.data, grad_out.data, axes=([0], [0]))
    for a in range(kh):
        for bofs in range(kw):
            gx[:, a : a + sh * ho : sh, bofs : bofs + sw * wo : sw] += t[:, a, bofs]
    if ph or pw:
        gx = gx[:, ph : ph + h, pw : pw + wd]
    return Tensor(np.ascontiguousarray(gx))


def _pool_windows(x: Tensor, window, stride):
    if x.ndim != 3:
        raise ShapeMismatch(f"pooling needs (C,H,W), got {x.shape}")
    kh, kw = _pair(window)
    sh, sw = _pair(stride) if stride is not None else (kh, kw)
    _, h, w = x.shape
    if kh > h or kw > w:
        raise ShapeMismatch(f"window {kh}x{kw} exceeds input {h}x{w}")
    win = sliding_window_view(x.data, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    return win, (kh, kw), (sh, sw)


def maxpool2d(x: Tensor, window, stride=None) -> tuple[Tensor, np.ndarray]:
    """Per-window max plus the in-window argmax coordinates (C,H',W',2).

    Ties resolve to the first maximum in row-major window order, so the
    backward routing is deterministic.
    """
    win, (kh, kw), _ = _pool_windows(x, window, stride)
    c, ho, wo = win.shape[:3]
    flat = win.reshape(c, ho, wo, kh * kw)
    idx = flat.argmax(axis=3)
    out = np.take_along_axis(flat, idx[..., None], axis=3)[..., 0]
    argmax = np.stack(np.divmod(idx, kw), axis=-1)
    return Tensor(out), argmax


def avgpool2d(x: Tensor, window, stride=None) -> Tensor:
    win, _, _ = _pool_windows(x, window, stride)
    if x.dtype not in ("f32", "f64"):
        raise DtypeMismatch("avgpool2d needs a float tensor")
    return Tensor(win.mean(axis=(3, 4)).astype(x.data.dtype, copy=False))


def pool_output_shape(input_shape, window, stride=None) -> tuple[int, int, int]:
    c, h, w = input_shape
    kh, kw = _pair(window)
    sh, sw = _pair(stride) if stride is not None else (kh, kw)
    return c, (h - kh) // sh + 1, (w - kw) // sw + 1


def sign0(x: Tensor) -> Tensor:
    """+1 where x >= 0, else -1 (so sign0(0) == +1)."""
    return Tensor(np.where(x.data >= 0, 1.0, -1.0).astype(x.data.dtype, copy=False))


def div_stable(a: Tensor, b: Tensor, eps: float) -> Tensor:
    """a / (b + eps * sign0(b)); never divides by zero for eps > 0."""
    _check_same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    denom = b.data + eps * np.where(b.data >= 0, 1.0, -1.0).astype(b.data.dtype)
    return Tensor(a.data / denom)


def relu(x: Tensor) -> Tensor:
    return Tensor(np.maximum(x.data, 0))


def pos(x: Tensor) -> Tensor:
    """max(x, 0) elementwise; pos(x) + neg(x) == x exactly."""
    return Tensor(np.maximum(x.data, 0))


def neg(x: Tensor) -> Tensor:
    """min(x, 0) elementwise."""
    return Tensor(np.minimum(x.data, 0))
