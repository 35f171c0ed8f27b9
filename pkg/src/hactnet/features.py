"""Entity extraction and hand-crafted node features.

Nucleus-level: 7 shape features from second central moments, 8 intensity /
co-occurrence texture features. Region-level: 6 co-occurrence features on
the region's luminance plus 13 color statistics per RGB channel (45 total).

Conventions pinned here because no single standard exists:
  - co-occurrence matrices use 8 gray levels, distance 1, the four
    directions 0/45/90/135 averaged after per-offset normalization;
  - intensities are luminance rescaled to [0, 1];
  - entropy is Shannon entropy in nats;
  - channel energy is the mean squared intensity;
  - a region too small to contain any pixel pair gets the degenerate
    co-occurrence matrix with all mass at its quantized mean level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .backend import kernels
from .color import luminance

MIN_NUCLEUS_AREA = 10
GLCM_LEVELS = 8
BACKGROUND_RING_PX = 5

SHAPE_SCHEMA = (
    "eccentricity",
    "area",
    "axis_major",
    "axis_minor",
    "perimeter",
    "solidity",
    "orientation",
)
NUCLEUS_TEXTURE_SCHEMA = (
    "fg_bg_difference",
    "intensity_std",
    "intensity_skewness",
    "intensity_entropy",
    "glcm_dissimilarity",
    "glcm_homogeneity",
    "glcm_energy",
    "glcm_asm",
)
_REGION_GLCM = (
    "glcm_contrast",
    "glcm_dissimilarity",
    "glcm_homogeneity",
    "glcm_energy",
    "glcm_entropy",
    "glcm_asm",
)
_CHANNEL_STATS = ("mean", "std", "median", "energy", "skewness")
REGION_SCHEMA = _REGION_GLCM + tuple(
    f"{ch}_{name}"
    for ch in ("r", "g", "b")
    for name in tuple(f"hist{i}" for i in range(8)) + _CHANNEL_STATS
)


@dataclass(frozen=True)
class EntityMask:
    """One 4-connected pixel region: coordinate arrays plus bounding box."""

    ys: np.ndarray
    xs: np.ndarray
    source_shape: tuple[int, int]

    def __post_init__(self):
        if len(self.ys) == 0:
            raise ValueError("empty entity mask")
        self.ys.setflags(write=False)
        self.xs.setflags(write=False)

    @property
    def area(self) -> int:
        return len(self.ys)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """(y0, y1, x0, x1), half-open."""
        return (
            int(self.ys.min()),
            int(self.ys.max()) + 1,
            int(self.xs.min()),
            int(self.xs.max()) + 1,
        )

    def centroid(self) -> tuple[float, float]:
        """(x, y) mean of pixel coordinates."""
        return float(self.xs.mean()), float(self.ys.mean())

    def dense(self) -> np.ndarray:
        """Boolean mask over the full source shape."""
        m = np.zeros(self.source_shape, dtype=bool)
        m[self.ys, self.xs] = True
        return m


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.schema):
            raise ValueError(
                f"{len(self.values)} values vs {len(self.schema)} schema names"
            )
        self.values.setflags(write=False)


def _intensity01(image: np.ndarray) -> np.ndarray:
    lum = luminance(image)
    if image.dtype == np.uint8:
        lum = lum / 255.0
    return lum


def otsu_threshold(values: np.ndarray) -> int | None:
    """Otsu threshold over a uint8-scale array; None when the input has no
    spread (a single gray level)."""
    hist = np.bincount(values.reshape(-1).astype(np.int64), minlength=256)[:256]
    total = hist.sum()
    p = hist / total
    omega = np.cumsum(p)
    mu = np.cumsum(p * np.arange(256))
    mu_t = mu[-1]
    denom = omega * (1.0 - omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_b = np.where(denom > 0, (mu_t * omega - mu) ** 2 / denom, 0.0)
    if sigma_b.max() <= 0:
        return None
    return int(np.argmax(sigma_b))


def detect_nuclei(image: np.ndarray) -> list[EntityMask]:
    """Blob detector: Otsu on inverted luminance, 4-connected components,
    regions under MIN_NUCLEUS_AREA pixels dropped."""
    lum = luminance(image)
    if image.dtype != np.uint8:
        lum = lum * 255.0
    inverted = np.clip(np.rint(255.0 - lum), 0, 255).astype(np.uint8)
    t = otsu_threshold(inverted)
    if t is None:
        return []
    fg = inverted > t
    labels, count = ndimage.label(fg)  # default structure is 4-connected
    masks = []
    for ys, xs in _component_coords(labels, count):
        if len(ys) >= MIN_NUCLEUS_AREA:
            masks.append(EntityMask(ys=ys, xs=xs, source_shape=image.shape[:2]))
    return masks


def _component_coords(labels: np.ndarray, count: int):
    """Coordinate arrays per component id 1..count, in id order."""
    ys, xs = np.nonzero(labels)
    ids = labels[ys, xs]
    order = np.argsort(ids, kind="stable")
    ys, xs, ids = ys[order], xs[order], ids[order]
    bounds = np.searchsorted(ids, np.arange(1, count + 2))
    for i in range(count):
        s = slice(bounds[i], bounds[i + 1])
        yield ys[s].astype(np.int64), xs[s].astype(np.int64)


def _hull_pixel_count(ys: np.ndarray, xs: np.ndarray) -> int:
    """Number of integer pixel centers inside or on the convex hull of the
    mask's pixel centers; equals the area for convex masks."""
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    uniq = np.unique(pts, axis=0)
    if len(uniq) < 3:
        return len(ys)
    try:
        hull = ConvexHull(uniq)
    except QhullError:  # collinear
        return len(ys)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    gy, gx = np.mgrid[y0:y1, x0:x1]
    grid = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1).astype(np.float64)
    a, b = hull.equations[:, :2], hull.equations[:, 2]
    inside = (grid @ a.T + b <= 1e-9).all(axis=1)
    return int(inside.sum())


def shape_features(mask: EntityMask) -> FeatureVector:
    """Eccentricity, area, axis lengths, perimeter, solidity, orientation.

    Axis lengths are 4*sqrt of the covariance eigenvalues; orientation is
    the major-axis angle in (-pi/2, pi/2], with the 1-px degenerate case
    pinned to eccentricity 0 and orientation 0. Perimeter counts exposed
    pixel edges.
    """
    ys = mask.ys.astype(np.float64)
    xs = mask.xs.astype(np.float64)
    area = float(mask.area)
    cx, cy = xs.mean(), ys.mean()
    mu20 = ((xs - cx) ** 2).mean()
    mu02 = ((ys - cy) ** 2).mean()
    mu11 = ((xs - cx) * (ys - cy)).mean()
    spread = math.sqrt(4.0 * mu11**2 + (mu20 - mu02) ** 2)
    lam1 = (mu20 + mu02 + spread) / 2.0
    lam2 = (mu20 + mu02 - spread) / 2.0
    if lam1 <= 1e-12:
        eccentricity, orientation = 0.0, 0.0
    else:
        eccentricity = math.sqrt(max(0.0, 1.0 - lam2 / lam1))
        orientation = 0.5 * math.atan2(2.0 * mu11, mu20 - mu02)
    axis_major = 4.0 * math.sqrt(max(0.0, lam1))
    axis_minor = 4.0 * math.sqrt(max(0.0, lam2))

    dense = mask.dense()
    padded = np.pad(dense, 1)
    exposed = 0
    for shift in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        neighbor = np.roll(padded, shift, axis=(0, 1))
        exposed += int((dense & ~neighbor[1:-1, 1:-1]).sum())
    solidity = area / max(1, _hull_pixel_count(mask.ys, mask.xs))

    return FeatureVector(
        values=np.array(
            [eccentricity, area, axis_major, axis_minor, float(exposed), solidity, orientation]
        ),
        schema=SHAPE_SCHEMA,
    )


def _quantize(values01: np.ndarray, levels: int) -> np.ndarray:
    q = np.floor(values01 * levels).astype(np.int64)
    return np.clip(q, 0, levels - 1)


def _averaged_glcm(quant: np.ndarray, mask: np.ndarray, levels: int) -> np.ndarray:
    counts = kernels.glcm_counts(quant, mask, levels)
    per_offset = []
    for c in counts:
        total = c.sum()
        if total > 0:
            per_offset.append(c / total)
    if not per_offset:
        mean_level = int(np.rint(quant[mask.astype(bool)].mean())) if mask.any() else 0
        out = np.zeros((levels, levels))
        out[mean_level, mean_level] = 1.0
        return out
    return np.mean(per_offset, axis=0)


def glcm(patch: np.ndarray, levels: int = GLCM_LEVELS) -> np.ndarray:
    """Normalized symmetric co-occurrence matrix of a grayscale patch.

    Float patches are read on a [0, 1] scale, integer patches on [0, 255].
    """
    p = np.asarray(patch)
    if p.ndim != 2 or p.shape[0] < 2 or p.shape[1] < 2:
        raise ValueError(f"patch must be at least 2x2, got shape {p.shape}")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    scale = 255.0 if np.issubdtype(p.dtype, np.integer) else 1.0
    quant = _quantize(p.astype(np.float64) / scale, levels)
    return _averaged_glcm(quant, np.ones(p.shape, dtype=np.uint8), levels)


def _glcm_stats(p: np.ndarray) -> dict[str, float]:
    levels = p.shape[0]
    i, j = np.mgrid[0:levels, 0:levels]
    diff = np.abs(i - j)
    asm = float((p * p).sum())
    nz = p[p > 0]
    return {
        "contrast": float((p * diff**2).sum()),
        "dissimilarity": float((p * diff).sum()),
        "homogeneity": float((p / (1.0 + diff**2)).sum()),
        "energy": math.sqrt(asm),
        "entropy": float(-(nz * np.log(nz)).sum()),
        "asm": asm,
    }


def _histogram8(values01: np.ndarray) -> np.ndarray:
    hist, _ = np.histogram(values01, bins=8, range=(0.0, 1.0))
    return hist / len(values01)


def _entropy(hist: np.ndarray) -> float:
    nz = hist[hist > 0]
    return float(-(nz * np.log(nz)).sum())


def _skewness(v: np.ndarray) -> float:
    m2 = ((v - v.mean()) ** 2).mean()
    if m2 <= 1e-18:
        return 0.0
    m3 = ((v - v.mean()) ** 3).mean()
    return float(m3 / m2**1.5)


def texture_features_nucleus(image: np.ndarray, mask: EntityMask) -> FeatureVector:
    """Intensity statistics of the mask against its 5-px surrounding ring,
    plus co-occurrence statistics over the mask's bounding box."""
    lum = _intensity01(image)
    dense = mask.dense()
    ring = ndimage.binary_dilation(dense, iterations=BACKGROUND_RING_PX) & ~dense
    fg_vals = lum[dense]
    fg = fg_vals.mean()
    bg = lum[ring].mean() if ring.any() else fg

    hist = _histogram8(fg_vals)
    y0, y1, x0, x1 = mask.bbox
    box = _quantize(lum[y0:y1, x0:x1], GLCM_LEVELS)
    p = _averaged_glcm(box, np.ones(box.shape, dtype=np.uint8), GLCM_LEVELS)
    g = _glcm_stats(p)

    return FeatureVector(
        values=np.array(
            [
                abs(fg - bg),
                fg_vals.std(),
                _skewness(fg_vals),
                _entropy(hist),
                g["dissimilarity"],
                g["homogeneity"],
                g["energy"],
                g["asm"],
            ]
        ),
        schema=NUCLEUS_TEXTURE_SCHEMA,
    )


def superpixel_features(image: np.ndarray, region_mask: np.ndarray) -> FeatureVector:
    """45 region attributes: 6 co-occurrence features on region luminance,
    then per RGB channel an 8-bin histogram plus mean, std, median, energy
    and skewness."""
    region_mask = np.asarray(region_mask, dtype=bool)
    if not region_mask.any():
        raise ValueError("empty region")
    ys, xs = np.nonzero(region_mask)
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    lum = _intensity01(image)[y0:y1, x0:x1]
    sub = region_mask[y0:y1, x0:x1]
    p = _averaged_glcm(_quantize(lum, GLCM_LEVELS), sub.astype(np.uint8), GLCM_LEVELS)
    g = _glcm_stats(p)
    values = [g[name] for name in ("contrast", "dissimilarity", "homogeneity", "energy", "entropy", "asm")]

    chans = np.asarray(image, dtype=np.float64)
    if image.dtype == np.uint8:
        chans = chans / 255.0
    for c in range(3):
        v = chans[..., c][region_mask]
        values.extend(_histogram8(v))
        values.extend(
            [v.mean(), v.std(), float(np.median(v)), float((v * v).mean()), _skewness(v)]
        )
    return FeatureVector(values=np.array(values), schema=REGION_SCHEMA)


def read_nuclei_csv(path: str | Path) -> np.ndarray:
    """Parse an `x,y,radius,intensity` CSV (header required) into an (N, 4)
    float array."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "radius", "intensity"]:
            raise ValueError(f"{path}: expected header 'x,y,radius,intensity'")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{line}: expected 4 columns")
            rows.append([float(v) for v in row])
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def masks_from_detections(detections: np.ndarray, image_shape: tuple[int, int]) -> list[EntityMask]:
    """Turn (x, y, radius, ...) detections into filled-disc entity masks,
    clipped to the image; a sub-pixel radius still yields one pixel."""
    h, w = image_shape
    masks = []
    for det in detections:
        x, y, r = det[0], det[1], max(0.0, det[2])
        y0, y1 = max(0, int(math.floor(y - r))), min(h, int(math.ceil(y + r)) + 1)
        x0, x1 = max(0, int(math.floor(x - r))), min(w, int(math.ceil(x + r)) + 1)
        gy, gx = np.mgrid[y0:y1, x0:x1]
        disc = (gx - x) ** 2 + (gy - y) ** 2 <= r * r
        ys, xs = np.nonzero(disc)
        if len(ys) == 0:
            ys = np.array([min(h - 1, max(0, int(round(y))))])
            xs = np.array([min(w - 1, max(0, int(round(x))))])
        else:
            ys, xs = ys + y0, xs + x0
        masks.append(EntityMask(ys=ys.astype(np.int64), xs=xs.astype(np.int64), source_shape=(h, w)))
    return masks
