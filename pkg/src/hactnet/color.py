"""Color conversions pinned for reproducibility.

sRGB -> CIELAB uses the D65 white point with the standard sRGB
linearization. Constants, to six significant digits:

    linearize:  c <= 0.0404500 ? c / 12.9200 : ((c + 0.0550000) / 1.05500) ** 2.40000
    RGB->XYZ:   [[0.412456, 0.357576, 0.180438],
                 [0.212673, 0.715152, 0.0721750],
                 [0.0193339, 0.119192, 0.950304]]
    white:      Xn = 0.950456, Yn = 1.00000, Zn = 1.08876  (derived from the
                matrix row sums so that RGB=(1,1,1) maps to L=100 exactly)
    f(t):       t > (6/29)**3 ? t ** (1/3) : t / (3 * (6/29)**2) + 4/29
    L = 116 f(Y/Yn) - 16;  a = 500 (f(X/Xn) - f(Y/Yn));  b = 200 (f(Y/Yn) - f(Z/Zn))

Luminance is Rec. 601: Y601 = 0.299 R + 0.587 G + 0.114 B, on the same
scale as the input channels.
"""

from __future__ import annotations

import numpy as np

_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE = _RGB_TO_XYZ.sum(axis=1)  # XYZ of sRGB white, so (1,1,1) -> L=100 exactly

_DELTA = 6.0 / 29.0


def srgb_to_lab(image: np.ndarray) -> np.ndarray:
    """Convert an H x W x 3 sRGB image (uint8 or floats in [0,1]) to CIELAB.

    Returns float64 with L in [0, 100] and a/b roughly in [-128, 128].
    """
    rgb = np.asarray(image, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got shape {rgb.shape}")
    if image.dtype == np.uint8:
        rgb = rgb / 255.0
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T
    t = xyz / _WHITE
    f = np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance of an H x W x 3 image, float64, same scale as input."""
    rgb = np.asarray(image, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected H x W x 3 image, got shape {rgb.shape}")
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
