import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrilens import tensor as T
from attrilens.errors import DtypeMismatch, ShapeMismatch, UnsupportedDtype


def test_tensor_dtypes_and_contiguity():
    t = T.Tensor([[1, 2], [3, 4]], dtype="f32")
    assert t.dtype == "f32"
    assert t.shape == (2, 2)
    assert t.data.flags["C_CONTIGUOUS"]
    for d in ("f32", "f64", "i64", "u8"):
        assert T.zeros((2, 3), d).dtype == d
    with pytest.raises(UnsupportedDtype):
        T.Tensor([1], dtype="f16")


def test_tensor_immutable():
    t = T.Tensor([1.0, 2.0])
    with pytest.raises(AttributeError):
        t.shape = (3,)
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_elementwise_requires_matching_shape_and_dtype():
    a = T.Tensor([1.0, 2.0])
    with pytest.raises(ShapeMismatch):
        a + T.Tensor([[1.0, 2.0]])
    with pytest.raises(DtypeMismatch):
        a + T.Tensor([1, 2], dtype="f32")
    # scalars broadcast, full tensors of equal shape work
    assert (a + 1).tolist() == [2.0, 3.0]
    assert (2 * a).tolist() == [2.0, 4.0]
    assert (a - T.Tensor([1.0, 1.0])).tolist() == [0.0, 1.0]


def test_matmul_shapes():
    a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    v = T.Tensor([1.0, 1.0])
    assert T.matmul(a, v).tolist() == [3.0, 7.0]
    with pytest.raises(ShapeMismatch):
        T.matmul(a, T.Tensor([1.0, 2.0, 3.0]))
    with pytest.raises(ShapeMismatch):
        T.matmul(v, v)


def test_matmul_associativity():
    rng = np.random.default_rng(7)
    a = T.Tensor(rng.normal(size=(4, 5)))
    b = T.Tensor(rng.normal(size=(5, 6)))
    c = T.Tensor(rng.normal(size=(6, 3)))
    left = T.matmul(T.matmul(a, b), c).data
    right = T.matmul(a, T.matmul(b, c)).data
    assert np.allclose(left, right, rtol=0, atol=1e-12)


def test_div_stable_examples():
    one = T.Tensor([1.0])
    zero = T.Tensor([0.0])
    assert T.div_stable(one, zero, 1e-6).tolist() == [1e6]
    # negative denominator keeps its sign
    assert T.div_stable(one, T.Tensor([-1e-7]), 1e-6).item() < 0
    assert np.isfinite(T.div_stable(one, T.Tensor([-2.0]), 1e-9).item())


def test_pos_neg_relu():
    x = T.Tensor([-2.0, 0.0, 3.0])
    assert T.pos(x).tolist() == [0.0, 0.0, 3.0]
    assert T.neg(x).tolist() == [-2.0, 0.0, 0.0]
    assert T.relu(x).tolist() == [0.0, 0.0, 3.0]
    assert T.sign0(T.Tensor([0.0])).tolist() == [1.0]
    assert T.sign0(T.Tensor([-0.5])).tolist() == [-1.0]


@given(
    st.lists(
        st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
        min_size=1,
        max_size=32,
    )
)
def test_pos_plus_neg_is_identity(vals):
    x = T.Tensor(vals)
    assert (T.pos(x) + T.neg(x)).tolist() == x.tolist()


@given(
    st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=1, max_size=16),
    st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=1, max_size=16),
)
def test_div_stable_always_finite(avals, bvals):
    n = min(len(avals), len(bvals))
    a = T.Tensor(avals[:n])
    b = T.Tensor(bvals[:n])
    out = T.div_stable(a, b, 1e-6)
    assert np.isfinite(out.data).all()


def test_conv2d_identity_kernel():
    x = T.Tensor(np.arange(9, dtype=np.float64).reshape(1, 3, 3))
    w = T.Tensor(np.ones((1, 1, 1, 1)))
    b = T.zeros((1,))
    out = T.conv2d(x, w, b)
    assert out.shape == (1, 3, 3)
    assert np.array_equal(out.data, x.data)


def test_conv2d_sum_kernel():
    x = T.ones((1, 3, 3))
    w = T.ones((1, 1, 3, 3))
    b = T.zeros((1,))
    out = T.conv2d(x, w, b)
    assert out.shape == (1, 1, 1)
    assert out.item() == 9.0
    padded = T.conv2d(x, w, b, stride=1, pad=1)
    assert padded.shape == (1, 3, 3)
    assert padded.data[0, 1, 1] == 9.0
    assert padded.data[0, 0, 0] == 4.0


def test_conv2d_stride_and_bias():
    x = T.Tensor(np.arange(16, dtype=np.float64).reshape(1, 4, 4))
    w = T.ones((2, 1, 2, 2))
    b = T.Tensor([0.0, 10.0])
    out = T.conv2d(x, w, b, stride=2)
    assert out.shape == (2, 2, 2)
    assert out.data[0, 0, 0] == 0 + 1 + 4 + 5
    assert out.data[1, 0, 0] == 10 + 0 + 1 + 4 + 5


def test_conv2d_shape_errors():
    x = T.ones((2, 3, 3))
    w = T.ones((1, 1, 2, 2))
    with pytest.raises(ShapeMismatch):
        T.conv2d(x, w, T.zeros((1,)))  # channel mismatch
    w2 = T.ones((1, 2, 5, 5))
    with pytest.raises(ShapeMismatch):
        T.conv2d(x, w2, T.zeros((1,)))  # kernel exceeds padded input
    with pytest.raises(ShapeMismatch):
        T.conv2d(x, T.ones((1, 2, 2, 2)), T.zeros((2,)))  # bad bias extent


def _conv_jacobian(w, in_shape, stride, pad):
    """Dense Jacobian of conv2d by brute-force unit perturbation."""
    c, h, wd = in_shape
    b = T.zeros((w.shape[0],))
    n_in = c * h * wd
    out_shape = T.conv2d_output_shape(in_shape, w.shape, stride, pad)
    n_out = int(np.prod(out_shape))
    jac = np.zeros((n_out, n_in))
    for i in range(n_in):
        e = np.zeros(n_in)
        e[i] = 1.0
        y = T.conv2d(T.Tensor(e.reshape(in_shape)), w, b, stride, pad)
        jac[:, i] = y.data.reshape(-1)
    return jac, out_shape


@pytest.mark.parametrize(
    "in_shape,kshape,stride,pad",
    [
        ((1, 4, 4), (1, 1, 2, 2), 1, 0),
        ((2, 5, 5), (3, 2, 3, 3), 1, 1),
        ((2, 6, 5), (2, 2, 3, 2), 2, 1),
        ((1, 4, 4), (2, 1, 2, 2), (2, 1), (0, 1)),
    ],
)
def test_conv2d_input_vjp_matches_dense_jacobian(in_shape, kshape, stride, pad):
    rng = np.random.default_rng(11)
    w = T.Tensor(rng.normal(size=kshape))
    jac, out_shape = _conv_jacobian(w, in_shape, stride, pad)
    g = rng.normal(size=out_shape)
    want = (jac.T @ g.reshape(-1)).reshape(in_shape)
    got = T.conv2d_input_vjp(T.Tensor(g), w, stride, pad, input_shape=in_shape)
    assert got.shape == in_shape
    denom = max(np.abs(want).max(), 1e-12)
    assert np.abs(got.data - want).max() / denom < 1e-4


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_conv2d_vjp_adjoint_identity(seed):
    # <conv(x), g> == <x, vjp(g)> characterizes the transpose exactly.
    rng = np.random.default_rng(seed)
    c, o = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    h = int(rng.integers(kh, kh + 4))
    wd = int(rng.integers(kw, kw + 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    x = T.Tensor(rng.normal(size=(c, h, wd)))
    w = T.Tensor(rng.normal(size=(o, c, kh, kw)))
    g = T.Tensor(rng.normal(size=T.conv2d_output_shape(x.shape, w.shape, stride, pad)))
    y = T.conv2d(x, w, T.zeros((o,)), stride, pad)
    lhs = float((y.data * g.data).sum())
    vx = T.conv2d_input_vjp(g, w, stride, pad, input_shape=x.shape)
    rhs = float((x.data * vx.data).sum())
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))


def test_maxpool2d_example_and_argmax():
    x = T.Tensor([[[1.0, 2.0], [3.0, 4.0]]])
    out, argmax = T.maxpool2d(x, 2)
    assert out.shape == (1, 1, 1)
    assert out.item() == 4.0
    assert tuple(argmax[0, 0, 0]) == (1, 1)


def test_maxpool2d_tie_takes_first_in_row_major_order():
    x = T.Tensor([[[5.0, 5.0], [5.0, 5.0]]])
    _, argmax = T.maxpool2d(x, 2)
    assert tuple(argmax[0, 0, 0]) == (0, 0)


def test_maxpool2d_stride_defaults_to_window():
    x = T.Tensor(np.arange(16, dtype=np.float64).reshape(1, 4, 4))
    out, argmax = T.maxpool2d(x, 2)
    assert out.shape == (1, 2, 2)
    assert out.data[0].tolist() == [[5.0, 7.0], [13.0, 15.0]]
    assert np.array_equal(argmax[0, :, :, 0], np.ones((2, 2)))


def test_avgpool2d():
    x = T.Tensor([[[1.0, 2.0], [3.0, 4.0]]])
    out = T.avgpool2d(x, 2)
    assert out.item() == 2.5
    with pytest.raises(DtypeMismatch):
        T.avgpool2d(T.Tensor([[[1, 2], [3, 4]]], dtype="i64"), 2)


def test_pool_window_too_large():
    with pytest.raises(ShapeMismatch):
        T.maxpool2d(T.ones((1, 2, 2)), 3)


def test_reductions():
    x = T.Tensor([[1.0, 9.0], [4.0, 2.0]])
    assert x.sum() == 16.0
    assert x.max() == 9.0
    assert x.argmax() == 1  # flat row-major index
