import io
import struct
import zlib

import numpy as np
import pytest
from PIL import Image

from attrilens import nn
from attrilens import tensor as T
from attrilens.attribution import (
    Gradient,
    Occlusion,
    attribute_gradient,
    attribute_integrated_gradients,
    attribute_occlusion,
    attribute_smoothgrad,
    heatmap_indices,
    make_composite,
    render_heatmap,
    render_input_image,
)
from attrilens.errors import ShapeMismatch
from attrilens.tensor import Tensor


def _linear_model(w=(2.0, -1.0)):
    return nn.Model([nn.linear("l", Tensor([list(w)]), Tensor([0.0]))], input_shape=(len(w),))


def test_gradient_no_composite_is_plain_gradient():
    res = attribute_gradient(_linear_model(), None, Tensor([1.0, 1.0]), Tensor([1.0]))
    assert res.relevance.tolist() == [2.0, -1.0]
    assert res.output.tolist() == [1.0]


def test_gradient_context_manager_interface():
    with Gradient(model=_linear_model()) as attributor:
        output, relevance = attributor(Tensor([1.0, 1.0]), Tensor([1.0]))
    assert output.tolist() == [1.0]
    assert relevance.tolist() == [2.0, -1.0]


def test_one_hot_seed_reports_forward_output():
    rng = np.random.default_rng(0)
    m = nn.Model(
        [
            nn.linear("l0", Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=5))),
            nn.relu("r"),
            nn.linear("l1", Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=4))),
        ],
        input_shape=(3,),
    )
    x = Tensor(rng.normal(size=3))
    want, _ = nn.forward(m, x)
    seed = np.zeros(4)
    seed[2] = 1.0
    res = attribute_gradient(m, None, x, Tensor(seed))
    assert res.output.data[2] == want.data[2]


def test_seed_relevance_shape_checked():
    with pytest.raises(ShapeMismatch):
        attribute_gradient(_linear_model(), None, Tensor([1.0, 1.0]), Tensor([1.0, 1.0]))


def _zero_bias_relu_net(seed=0):
    rng = np.random.default_rng(seed)
    return nn.Model(
        [
            nn.linear("l0", Tensor(rng.normal(size=(6, 4))), T.zeros((6,))),
            nn.relu("r0"),
            nn.linear("l1", Tensor(rng.normal(size=(3, 6))), T.zeros((3,))),
        ],
        input_shape=(4,),
    )


@pytest.mark.parametrize("seed", range(5))
def test_lrp_zero_equals_gradient_times_input(seed):
    model = _zero_bias_relu_net(seed)
    rng = np.random.default_rng(100 + seed)
    x = Tensor(rng.normal(size=4))
    out, _ = nn.forward(model, x)
    c = int(out.argmax())
    onehot = np.zeros(out.shape)
    onehot[c] = 1.0

    gxi = attribute_gradient(model, None, x, Tensor(onehot), times_input=True).relevance
    seed_rel = onehot * out.data[c]
    lrp = attribute_gradient(model, make_composite("epsilon", eps=0.0), x, Tensor(seed_rel)).relevance
    assert np.abs(lrp.data - gxi.data).max() <= 1e-6


def test_times_input_with_composite_rejected():
    with pytest.raises(ValueError):
        attribute_gradient(
            _linear_model(), make_composite("epsilon"), Tensor([1.0, 1.0]), Tensor([1.0]), times_input=True
        )


def test_smoothgrad_zero_noise_equals_gradient():
    m = _zero_bias_relu_net()
    x = Tensor(np.random.default_rng(1).normal(size=4))
    seed = Tensor([1.0, 0.0, 0.0])
    plain = attribute_gradient(m, None, x, seed)
    smooth = attribute_smoothgrad(m, None, x, seed, n=7, noise_rel=0.0, seed=3)
    assert smooth.relevance.data.tobytes() == plain.relevance.data.tobytes()


def test_smoothgrad_deterministic():
    m = _zero_bias_relu_net()
    x = Tensor(np.random.default_rng(2).normal(size=4))
    seed = Tensor([1.0, 0.0, 0.0])
    a = attribute_smoothgrad(m, None, x, seed, n=5, noise_rel=0.1, seed=9)
    b = attribute_smoothgrad(m, None, x, seed, n=5, noise_rel=0.1, seed=9)
    assert a.relevance.data.tobytes() == b.relevance.data.tobytes()


def test_smoothgrad_linear_model_converges_to_weights():
    w = np.array([1.5, -2.0, 0.5])
    m = nn.Model([nn.linear("l", Tensor([w.tolist()]), Tensor([0.0]))], input_shape=(3,))
    x = Tensor([1.0, 2.0, 3.0])
    res = attribute_smoothgrad(m, None, x, Tensor([1.0]), n=1000, noise_rel=0.3, seed=0)
    assert np.abs(res.relevance.data - w).max() <= 0.05 * np.abs(w).max()


def test_integrated_gradients_linear_exact():
    w = np.array([1.5, -2.0, 0.5])
    m = nn.Model([nn.linear("l", Tensor([w.tolist()]), Tensor([0.0]))], input_shape=(3,))
    x = Tensor([1.0, 2.0, 3.0])
    for steps in (1, 4, 8):
        res = attribute_integrated_gradients(m, x, T.zeros((3,)), Tensor([1.0]), steps=steps)
        assert res.relevance.tolist() == (w * x.data).tolist()


def test_integrated_gradients_zero_path():
    m = _zero_bias_relu_net()
    x = Tensor(np.random.default_rng(3).normal(size=4))
    res = attribute_integrated_gradients(m, x, x, Tensor([1.0, 0.0, 0.0]), steps=16)
    assert not np.any(res.relevance.data)


def test_integrated_gradients_baseline_shape_checked():
    m = _zero_bias_relu_net()
    with pytest.raises(ShapeMismatch):
        attribute_integrated_gradients(m, T.zeros((4,)), T.zeros((3,)), Tensor([1.0, 0.0, 0.0]))


@pytest.mark.parametrize("seed", range(3))
def test_integrated_gradients_completeness(seed):
    model = _zero_bias_relu_net(seed + 10)
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=4))
    baseline = Tensor(rng.normal(size=4))
    onehot = Tensor([0.0, 1.0, 0.0])
    res = attribute_integrated_gradients(model, x, baseline, onehot, steps=128)
    fx = nn.forward(model, x)[0].data[1]
    fb = nn.forward(model, baseline)[0].data[1]
    gap = fx - fb
    assert abs(res.relevance.sum() - gap) <= 0.05 * max(abs(gap), 1e-12)


def _sum_model(n):
    return nn.Model([nn.linear("l", T.ones((1, n)), T.zeros((1,)))], input_shape=(n,))


def test_occlusion_sum_model_recovers_input():
    x = Tensor([3.0, -1.0, 4.0, 1.5])
    res = attribute_occlusion(_sum_model(4), x, 0, window=1, stride=1, fill=0.0)
    assert res.relevance.tolist() == x.tolist()


def test_occlusion_fill_equals_input_gives_zero():
    x = T.full((4,), 2.5)
    res = attribute_occlusion(_sum_model(4), x, 0, window=2, stride=1, fill=2.5)
    assert not np.any(res.relevance.data)


def test_occlusion_full_window():
    x = Tensor([3.0, -1.0, 4.0, 1.5])
    res = attribute_occlusion(_sum_model(4), x, 0, window=4, stride=1, fill=0.0)
    assert np.allclose(res.relevance.data, x.sum())


def test_occlusion_matches_naive_oracle_exactly():
    rng = np.random.default_rng(4)
    model = nn.Model(
        [
            nn.conv2d("c0", Tensor(rng.normal(size=(2, 1, 3, 3)), dtype="f64"), Tensor(rng.normal(size=2)), pad=1),
            nn.relu("r0"),
            nn.flatten("f0"),
            nn.linear("l0", Tensor(rng.normal(size=(3, 32))), Tensor(rng.normal(size=3))),
        ],
        input_shape=(1, 4, 4),
    )
    x = Tensor(rng.normal(size=(1, 4, 4)))
    got = attribute_occlusion(model, x, 1, window=2, stride=1, fill=0.5)

    base = nn.forward(model, x)[0].data[1]
    acc = np.zeros((1, 4, 4))
    cnt = np.zeros((1, 4, 4))
    for i in range(3):
        for j in range(3):
            patched = x.data.copy()
            patched[:, i : i + 2, j : j + 2] = 0.5
            d = base - nn.forward(model, Tensor(patched))[0].data[1]
            acc[:, i : i + 2, j : j + 2] += d
            cnt[:, i : i + 2, j : j + 2] += 1
    want = np.divide(acc, cnt, out=np.zeros_like(acc), where=cnt > 0)
    assert got.relevance.data.tobytes() == want.tobytes()


def test_occlusion_context_manager():
    x = Tensor([3.0, -1.0, 4.0, 1.5])
    with Occlusion(_sum_model(4), window=1, stride=1, fill=0.0) as attributor:
        _, relevance = attributor(x, 0)
    assert relevance.tolist() == x.tolist()


# -- rendering ---------------------------------------------------------

def _chunks(png: bytes):
    assert png[:8] == b"\x89PNG\r\n\x1a\n"
    out, pos = {}, 8
    while pos < len(png):
        (length,) = struct.unpack_from(">I", png, pos)
        tag = png[pos + 4 : pos + 8]
        out.setdefault(tag, b"")
        out[tag] += png[pos + 8 : pos + 8 + length]
        pos += 12 + length
    return out


def test_zero_relevance_renders_black():
    png = render_heatmap(T.zeros((4, 4)), colormap="coldnhot")
    img = Image.open(io.BytesIO(png))
    assert img.mode == "P"
    idx = np.asarray(img)
    assert np.all(idx == 128)
    assert img.convert("RGB").getpixel((0, 0)) == (0, 0, 0)


def test_extreme_relevance_hits_palette_ends():
    r = Tensor([[1.0, -1.0], [0.0, 0.5]])
    idx = heatmap_indices(r)
    assert idx[0, 0] == 255
    assert idx[0, 1] == 0
    assert idx[1, 0] == 128
    img = Image.open(io.BytesIO(render_heatmap(r))).convert("RGB")
    assert img.getpixel((0, 0)) == (255, 255, 0)
    assert img.getpixel((1, 0)) == (0, 255, 255)


def test_channel_relevance_summed_for_rendering():
    r = Tensor(np.stack([np.ones((2, 2)), -np.ones((2, 2))]))
    assert np.all(heatmap_indices(r) == 128)


def test_colormap_changes_palette_not_index_plane():
    rng = np.random.default_rng(5)
    r = Tensor(rng.normal(size=(6, 6)))
    a = _chunks(render_heatmap(r, colormap="coldnhot"))
    b = _chunks(render_heatmap(r, colormap="hot"))
    c = _chunks(render_heatmap(r, colormap="gray"))
    assert a[b"IDAT"] == b[b"IDAT"] == c[b"IDAT"]
    assert a[b"PLTE"] != b[b"PLTE"]
    assert b[b"PLTE"] != c[b"PLTE"]
    assert len(a[b"PLTE"]) == 768


def test_overlay_extends_positive_to_white():
    r = Tensor([[1.0, -1.0], [0.0, 0.0]])
    base = Tensor(np.full((2, 2), 77, dtype=np.uint8))
    png = render_heatmap(r, colormap="coldnhot", mode="overlay", base_image=base)
    img = Image.open(io.BytesIO(png))
    assert img.mode == "RGB"
    assert img.getpixel((0, 0)) == (255, 255, 255)  # weight 1, white end
    assert img.getpixel((1, 0)) == (0, 255, 255)  # weight 1, cyan end
    assert img.getpixel((0, 1)) == (77, 77, 77)  # weight 0: pure gray base


def test_overlay_requires_matching_base():
    with pytest.raises(ShapeMismatch):
        render_heatmap(T.ones((2, 2)), mode="overlay", base_image=Tensor(np.zeros((3, 3), dtype=np.uint8)))
    with pytest.raises(ShapeMismatch):
        render_heatmap(T.ones((2, 2)), mode="overlay")


def test_render_input_image_grayscale():
    img_t = Tensor(np.arange(4, dtype=np.uint8).reshape(1, 2, 2) * 80)
    img = Image.open(io.BytesIO(render_input_image(img_t))).convert("RGB")
    assert img.getpixel((0, 0)) == (0, 0, 0)
    assert img.getpixel((1, 1)) == (240, 240, 240)


def test_idat_is_valid_zlib_with_filter_bytes():
    png = render_heatmap(T.ones((3, 5)))
    chunks = _chunks(png)
    rows = zlib.decompress(chunks[b"IDAT"])
    assert len(rows) == 3 * (5 + 1)
    assert rows[0] == 0  # filter byte
