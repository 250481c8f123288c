import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from attrilens import blob
from attrilens.errors import FormatError
from attrilens.tensor import Tensor


def test_f32_2x2_is_exactly_38_bytes():
    raw = blob.encode_tensor(Tensor([[1.0, 2.0], [3.0, 4.0]], dtype="f32"))
    assert len(raw) == 38
    assert raw[:4] == b"VZT1"
    assert raw[4] == 1  # f32 code
    assert raw[5] == 2  # ndim
    assert struct.unpack_from("<2Q", raw, 6) == (2, 2)
    assert struct.unpack_from("<4f", raw, 22) == (1.0, 2.0, 3.0, 4.0)


def test_empty_extent_is_14_bytes():
    raw = blob.encode_tensor(Tensor(np.zeros((0,)), dtype="f32"))
    assert len(raw) == 14
    back = blob.decode_tensor(raw)
    assert back.shape == (0,)
    assert back.dtype == "f32"


def test_dtype_codes():
    for dtype, code in [("f32", 1), ("f64", 2), ("i64", 3), ("u8", 4)]:
        raw = blob.encode_tensor(Tensor([1], dtype=dtype))
        assert raw[4] == code
        assert blob.decode_tensor(raw).dtype == dtype


def test_bad_magic_reports_offset_zero():
    raw = bytearray(blob.encode_tensor(Tensor([1.0])))
    raw[0] = ord("X")
    with pytest.raises(FormatError) as e:
        blob.decode_tensor(bytes(raw))
    assert e.value.offset == 0


def test_unknown_dtype_code_reports_offset_four():
    raw = bytearray(blob.encode_tensor(Tensor([1.0])))
    raw[4] = 99
    with pytest.raises(FormatError) as e:
        blob.decode_tensor(bytes(raw))
    assert e.value.offset == 4


def test_truncation_and_trailing_bytes():
    raw = blob.encode_tensor(Tensor([[1.0, 2.0], [3.0, 4.0]], dtype="f32"))
    with pytest.raises(FormatError):
        blob.decode_tensor(raw[:20])
    with pytest.raises(FormatError) as e:
        blob.decode_tensor(raw + b"\x00")
    assert e.value.offset == len(raw)
    with pytest.raises(FormatError):
        blob.decode_tensor(b"")


@given(
    st.sampled_from(["f32", "f64", "i64", "u8"]),
    array_shapes(min_dims=0, max_dims=4, min_side=0, max_side=5),
    st.integers(0, 2**32 - 1),
)
def test_roundtrip_bitwise(dtype, shape, seed):
    rng = np.random.default_rng(seed)
    if dtype in ("f32", "f64"):
        arr = rng.normal(size=shape)
    else:
        arr = rng.integers(0, 200, size=shape)
    t = Tensor(arr, dtype=dtype)
    back = blob.decode_tensor(blob.encode_tensor(t))
    assert back.dtype == t.dtype
    assert back.shape == t.shape
    assert back.data.tobytes() == t.data.tobytes()


def test_file_roundtrip(tmp_path):
    t = Tensor(np.arange(24).reshape(2, 3, 4), dtype="i64")
    p = tmp_path / "t.vzt"
    blob.write_blob(p, t)
    assert blob.read_blob(p) == t
