"""Pinned color conversions against published sRGB/CIELAB reference values."""

import numpy as np
import pytest

from hactnet.color import luminance, srgb_to_lab


def _lab_of(rgb255):
    img = np.array([[rgb255]], dtype=np.uint8)
    return srgb_to_lab(img)[0, 0]


# standard D65 reference values for the sRGB primaries and gray ramp
REFERENCE = [
    ((255, 255, 255), (100.0, 0.0, 0.0)),
    ((0, 0, 0), (0.0, 0.0, 0.0)),
    ((255, 0, 0), (53.2408, 80.0925, 67.2032)),
    ((0, 255, 0), (87.7347, -86.1827, 83.1793)),
    ((0, 0, 255), (32.2970, 79.1875, -107.8602)),
    ((128, 128, 128), (53.5850, 0.0, 0.0)),
]


@pytest.mark.parametrize("rgb,lab", REFERENCE)
def test_reference_values(rgb, lab):
    got = _lab_of(rgb)
    assert np.allclose(got, lab, atol=0.05)


def test_float_and_uint8_agree():
    rng = np.random.default_rng(0)
    img8 = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    imgf = img8.astype(np.float64) / 255.0
    assert np.allclose(srgb_to_lab(img8), srgb_to_lab(imgf), atol=1e-12)


def test_lab_ranges():
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    lab = srgb_to_lab(img)
    assert lab[..., 0].min() >= 0.0 and lab[..., 0].max() <= 100.0 + 1e-9
    assert np.isfinite(lab).all()


def test_luminance_rec601_weights():
    img = np.zeros((1, 3, 3))
    img[0, 0] = (1.0, 0, 0)
    img[0, 1] = (0, 1.0, 0)
    img[0, 2] = (0, 0, 1.0)
    lum = luminance(img)
    assert np.allclose(lum[0], [0.299, 0.587, 0.114])


def test_luminance_uint8_scale():
    img = np.full((2, 2, 3), 255, dtype=np.uint8)
    assert np.allclose(luminance(img), 255.0)


def test_bad_shape_rejected():
    with pytest.raises(ValueError):
        srgb_to_lab(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        luminance(np.zeros((4, 4, 4)))
