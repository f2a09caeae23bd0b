import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from defcert.deform import VectorField, field_translation
from defcert.errors import ParameterError, ShapeError
from defcert.grid_image import (
    Image,
    bilinear_sample,
    normalized_grid,
    read_pgm,
    warp,
    warp_pixels,
    write_pgm,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def images(max_side=8):
    return st.tuples(st.integers(2, max_side), st.integers(2, max_side)).flatmap(
        lambda hw: hnp.arrays(np.float64, (1,) + hw, elements=unit)
    ).map(Image)


def test_grid_corners():
    g = normalized_grid(2, 2)
    pts = set(zip(g.x.ravel(), g.y.ravel()))
    assert pts == {(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)}


def test_grid_center():
    g = normalized_grid(3, 3)
    assert (g.x[1, 1], g.y[1, 1]) == (0.0, 0.0)


def test_grid_28():
    g = normalized_grid(28, 28)
    assert g.x[0, 1] == pytest.approx(-1 + 2 / 27, abs=1e-15)
    assert g.x[0, 1] == pytest.approx(-0.92593, abs=1e-5)
    assert g.y[0, 1] == -1.0


def test_grid_degenerate_axis():
    g = normalized_grid(1, 4)
    assert np.all(g.x == 0.0)
    assert g.y[-1, 0] == 1.0


@pytest.mark.parametrize("w,h", [(0, 3), (3, 0)])
def test_grid_invalid_dims(w, h):
    with pytest.raises(ShapeError):
        normalized_grid(w, h)


def test_image_invariants():
    with pytest.raises(ParameterError):
        Image(np.full((1, 2, 2), 1.5))
    with pytest.raises(ShapeError):
        Image(np.zeros((2, 3, 3)))
    img = Image.from_uint8(np.array([[0, 255], [51, 102]]))
    assert img.pixels[0, 1, 0] == pytest.approx(0.2)
    assert img.shape == (1, 2, 2)


def test_sample_at_node(ramp):
    g = normalized_grid(ramp.width, ramp.height)
    for r, c in [(0, 0), (3, 7), (14, 14)]:
        val = bilinear_sample(ramp, (g.x[r, c], g.y[r, c]))
        assert val[0] == pytest.approx(ramp.pixels[0, r, c], abs=1e-15)


def test_sample_2x2_center():
    img = Image(np.array([[0.0, 1.0], [0.0, 1.0]]))
    assert bilinear_sample(img, (0.0, 0.0))[0] == 0.5


def test_sample_outside_is_zero():
    img = Image(np.ones((1, 5, 5)))
    # one texel is 0.5 normalized units wide here; past it everything is black
    assert bilinear_sample(img, (-1.6, 0.0))[0] == 0.0
    assert bilinear_sample(img, (0.0, 7.0))[0] == 0.0
    # within the first out-of-frame texel intensity fades linearly
    assert bilinear_sample(img, (-1.25, 0.0))[0] == pytest.approx(0.5)


def test_sample_rejects_nonfinite(ramp):
    with pytest.raises(ParameterError):
        bilinear_sample(ramp, (np.nan, 0.0))


@settings(max_examples=50, deadline=None)
@given(images())
def test_zero_field_is_exact_identity(img):
    assert warp(img, VectorField.zeros(img.width, img.height)) == img


@pytest.mark.parametrize("w,h", [(5, 5), (16, 16), (28, 28), (7, 4)])
def test_one_pixel_shift(w, h):
    rng = np.random.default_rng(w * h)
    img = Image(rng.uniform(size=(1, h, w)))
    g = normalized_grid(w, h)
    out = warp(img, field_translation(2 / (w - 1), 0.0, g))
    expected = np.zeros_like(img.pixels)
    expected[:, :, :-1] = img.pixels[:, :, 1:]
    assert np.array_equal(out.pixels, expected)


def test_offframe_field_gives_black(ramp):
    f = VectorField(np.full((15, 15), 10.0), np.full((15, 15), 10.0))
    assert np.all(warp(ramp, f).pixels == 0.0)


def test_warp_shape_mismatch(ramp):
    with pytest.raises(ShapeError):
        warp(ramp, VectorField.zeros(4, 4))


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 8).flatmap(lambda n: st.tuples(
        hnp.arrays(np.float64, (1, n, n), elements=unit),
        hnp.arrays(np.float64, (1, n, n), elements=unit),
        hnp.arrays(np.float64, (2, n, n), elements=st.floats(-1.5, 1.5)),
    )),
    st.floats(0.0, 1.0),
)
def test_warp_linear_in_image(data, a):
    x1, x2, field = data
    b = 1.0 - a
    u, v = field
    lhs = warp_pixels(a * x1 + b * x2, u, v)
    rhs = a * warp_pixels(x1, u, v) + b * warp_pixels(x2, u, v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(images(), hnp.arrays(np.float64, (2,), elements=st.floats(-3, 3)))
def test_warp_stays_in_unit_range(img, shift):
    f = field_translation(shift[0], shift[1], normalized_grid(img.width, img.height))
    out = warp(img, f).pixels
    assert out.min() >= 0.0 and out.max() <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_horizontal_convex_combination(width, col, t, seed):
    col = col % (width - 1)
    img = Image(np.random.default_rng(seed).uniform(size=(1, 3, width)))
    g = normalized_grid(width, 3)
    x = (1 - t) * g.x[1, col] + t * g.x[1, col + 1]
    got = bilinear_sample(img, (x, 0.0))[0]
    want = (1 - t) * img.pixels[0, 1, col] + t * img.pixels[0, 1, col + 1]
    assert abs(got - want) <= 1e-12


def test_pgm_roundtrip(tmp_path, ramp):
    path = tmp_path / "ramp.pgm"
    write_pgm(ramp, path)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n15 15\n255\n")
    assert len(raw) == len(b"P5\n15 15\n255\n") + 225
    back = read_pgm(path)
    assert np.max(np.abs(back.pixels - ramp.pixels)) <= 0.5 / 255 + 1e-12
