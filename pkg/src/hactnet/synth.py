"""Procedural generator of labeled synthetic tissue RoIs.

Five structural classes, mirroring a benign-to-invasive spectrum in shape
only: sparse isolated nuclei on a light canvas (0), duct rings with an
empty lumen (1), rings with an irregular inner layer (2), dense rings
around a dark necrotic core (3), and dense scattered nuclei infiltrating a
textured stroma band (4). Motifs differ in both nucleus topology and
tissue-region layout, so cell-level, tissue-level and hierarchical signals
all carry class information.

Determinism: every RoI is rendered from its own counter-based Philox
stream keyed by (seed, roi_counter), and slide-level style comes from
(seed, 2^32 + slide_index), so parallel generation reproduces the
sequential output exactly and the whole dataset is a pure function of the
config.

The "hard" motif set weakens the single-level signals on purpose: classes
0 and 1 share the tissue layout and differ only in nucleus density/size,
classes 2 and 3 share the ring topology and differ only in the duct
interior (white lumen vs speckled core that the blob detector cannot see).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

COLOR_BACKGROUND = np.array([0.97, 0.96, 0.97])
# epithelium and stroma stay close to white in luminance so the blob
# detector's threshold isolates nuclei rather than whole tissue regions
COLOR_EPITHELIUM = np.array([0.94, 0.87, 0.92])
COLOR_STROMA = np.array([0.93, 0.85, 0.82])
COLOR_NECROSIS = np.array([0.40, 0.31, 0.35])
COLOR_SPECKLE_HI = np.array([0.78, 0.70, 0.74])
COLOR_NUCLEUS = np.array([0.22, 0.12, 0.34])

NOISE_SIGMA_SCALE = 0.10
# per-tissue-type noise amplitude (background, epithelium, stroma,
# necrosis): distinct textures make intensity-spread features informative
# about the region type instead of pure jitter
TYPE_BACKGROUND, TYPE_EPITHELIUM, TYPE_STROMA, TYPE_NECROSIS = 0, 1, 2, 3
NOISE_MULT = np.array([0.6, 1.0, 1.5, 0.9])
_GAUSS_SIGMA = 0.55


@dataclass(frozen=True)
class MotifParams:
    """Structural recipe for one class."""

    scatter_count: tuple[int, int] = (0, 0)
    scatter_radius: tuple[float, float] = (3.2, 4.2)
    elongation: tuple[float, float] = (0.85, 1.0)
    duct_count: tuple[int, int] = (0, 0)
    ring_radius: tuple[float, float] = (14.0, 20.0)
    ring_nuclei: tuple[int, int] = (10, 14)
    ring_nucleus_radius: tuple[float, float] = (3.2, 4.2)
    inner_ring: bool = False
    inner_ring_scale: float = 0.55
    inner_ring_density: float = 0.55  # nuclei count relative to the outer ring
    inner_nucleus_radius: tuple[float, float] | None = None
    inner_ring_jitter: tuple[float, float] = (0.12, 1.2)  # angular, radial
    lumen: bool = False
    plain_duct: bool = False  # painted disc without a nucleus ring
    core: str = "none"  # none | solid | speckle
    stroma_band: bool = False


def default_motifs() -> tuple[MotifParams, ...]:
    return (
        MotifParams(scatter_count=(34, 48), scatter_radius=(3.2, 4.0)),
        MotifParams(
            scatter_count=(12, 18),
            scatter_radius=(4.2, 5.0),
            duct_count=(3, 4),
            ring_radius=(14, 20),
            ring_nuclei=(11, 15),
            ring_nucleus_radius=(3.4, 4.1),
            lumen=True,
        ),
        MotifParams(
            scatter_count=(12, 18),
            duct_count=(3, 4),
            ring_radius=(14, 20),
            ring_nuclei=(11, 15),
            lumen=True,
            inner_ring=True,
            inner_ring_density=0.8,
            inner_nucleus_radius=(2.5, 3.1),
            inner_ring_jitter=(0.5, 3.5),
        ),
        MotifParams(
            scatter_count=(10, 16),
            duct_count=(2, 3),
            ring_radius=(20, 26),
            ring_nuclei=(22, 28),
            ring_nucleus_radius=(2.7, 3.2),
            inner_ring=True,
            inner_ring_scale=0.7,
            inner_ring_density=0.85,
            core="solid",
        ),
        MotifParams(
            scatter_count=(120, 160),
            scatter_radius=(2.8, 3.4),
            elongation=(0.55, 0.8),
            stroma_band=True,
        ),
    )


def hard_motifs() -> tuple[MotifParams, ...]:
    return (
        MotifParams(scatter_count=(14, 20), scatter_radius=(4.0, 5.0), duct_count=(2, 3), plain_duct=True),
        MotifParams(scatter_count=(45, 60), scatter_radius=(2.8, 3.4), duct_count=(2, 3), plain_duct=True),
        MotifParams(duct_count=(2, 3), ring_radius=(15, 21), ring_nuclei=(12, 16), lumen=True),
        MotifParams(duct_count=(2, 3), ring_radius=(15, 21), ring_nuclei=(12, 16), core="speckle"),
        MotifParams(
            scatter_count=(60, 90),
            scatter_radius=(3.0, 3.8),
            elongation=(0.55, 0.8),
            stroma_band=True,
        ),
    )


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_slides: int = 40
    rois_per_slide: int = 10
    image_size_range: tuple[int, int] = (128, 192)
    num_classes: int = 5
    noise_level: float = 0.15
    motif_mode: str = "default"  # default | hard
    class_motif_params: tuple[MotifParams, ...] | None = None

    def __post_init__(self):
        if self.image_size_range[0] < 128:
            raise ValueError("image sizes must be >= 128")
        if self.image_size_range[0] > self.image_size_range[1]:
            raise ValueError("image_size_range must be (min, max)")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")
        if not 0.0 <= self.noise_level <= 1.0:
            raise ValueError("noise_level must be in [0, 1]")
        if self.motif_mode not in ("default", "hard"):
            raise ValueError("motif_mode must be 'default' or 'hard'")

    def motifs(self) -> tuple[MotifParams, ...]:
        base = self.class_motif_params
        if base is None:
            base = hard_motifs() if self.motif_mode == "hard" else default_motifs()
        # cycle when num_classes differs from the motif table
        return tuple(base[c % len(base)] for c in range(self.num_classes))


@dataclass(frozen=True)
class SynthSample:
    """One synthetic RoI: raster, ground-truth nuclei and identity."""

    image: np.ndarray  # H x W x 3 uint8
    nuclei: np.ndarray  # (N, 4) rows of x, y, radius, intensity
    label: int
    slide_id: str
    roi_id: str

    def __post_init__(self):
        self.image.setflags(write=False)
        self.nuclei.setflags(write=False)


def _roi_rng(seed: int, roi_counter: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, roi_counter], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _slide_rng(seed: int, slide_index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, (1 << 32) + slide_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def slide_style(cfg: SynthConfig, slide_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-slide label distribution and global color shift."""
    rng = _slide_rng(cfg.seed, slide_index)
    dominant = int(rng.integers(cfg.num_classes))
    w = float(rng.uniform(0.5, 0.75))
    dist = np.full(cfg.num_classes, (1.0 - w) / (cfg.num_classes - 1))
    dist[dominant] = w
    shift = rng.uniform(-0.010, 0.010, size=3)
    return dist, shift


def _paint_disc(img, types, cx, cy, radius, color, type_id):
    h, w = img.shape[:2]
    y0, y1 = max(0, int(cy - radius) - 1), min(h, int(cy + radius) + 2)
    x0, x1 = max(0, int(cx - radius) - 1), min(w, int(cx + radius) + 2)
    gy, gx = np.mgrid[y0:y1, x0:x1]
    inside = (gx - cx) ** 2 + (gy - cy) ** 2 <= radius * radius
    img[y0:y1, x0:x1][inside] = color
    types[y0:y1, x0:x1][inside] = type_id


def _paint_speckle(img, types, cx, cy, radius):
    """2x2-cell checker of dark and mid tones; the fragments stay under the
    blob detector's area floor, so the core never enters the cell graph."""
    h, w = img.shape[:2]
    y0, y1 = max(0, int(cy - radius) - 1), min(h, int(cy + radius) + 2)
    x0, x1 = max(0, int(cx - radius) - 1), min(w, int(cx + radius) + 2)
    gy, gx = np.mgrid[y0:y1, x0:x1]
    inside = (gx - cx) ** 2 + (gy - cy) ** 2 <= radius * radius
    checker = ((gy // 2) + (gx // 2)) % 2 == 0
    patch = img[y0:y1, x0:x1]
    patch[inside & checker] = COLOR_NECROSIS
    patch[inside & ~checker] = COLOR_SPECKLE_HI
    types[y0:y1, x0:x1][inside] = TYPE_NECROSIS


def _render_nucleus(img, x, y, radius, ratio, angle, peak):
    h, w = img.shape[:2]
    r_out = radius + 1.0
    y0, y1 = max(0, int(y - r_out) - 1), min(h, int(y + r_out) + 2)
    x0, x1 = max(0, int(x - r_out) - 1), min(w, int(x + r_out) + 2)
    gy, gx = np.mgrid[y0:y1, x0:x1]
    u = (gx - x) * math.cos(angle) + (gy - y) * math.sin(angle)
    v = -(gx - x) * math.sin(angle) + (gy - y) * math.cos(angle)
    rho2 = (u / radius) ** 2 + (v / (radius * ratio)) ** 2
    weight = np.where(rho2 <= 1.0, peak * np.exp(-rho2 / (2.0 * _GAUSS_SIGMA**2)), 0.0)
    patch = img[y0:y1, x0:x1]
    patch[:] = patch * (1.0 - weight[..., None]) + COLOR_NUCLEUS * weight[..., None]


def _separated(points: list[tuple[float, float]], x, y, sep) -> bool:
    return all((px - x) ** 2 + (py - y) ** 2 >= sep * sep for px, py in points)


def _scatter_points(rng, h, w, count, sep, margin, taken, forbidden):
    """Rejection-sample up to `count` positions with pairwise separation,
    avoiding the forbidden discs; deterministic in the rng stream."""
    out = []
    attempts = 0
    while len(out) < count and attempts < 60 * count:
        attempts += 1
        x = float(rng.uniform(margin, w - margin))
        y = float(rng.uniform(margin, h - margin))
        if not _separated(taken + out, x, y, sep):
            continue
        if any((x - fx) ** 2 + (y - fy) ** 2 < fr * fr for fx, fy, fr in forbidden):
            continue
        out.append((x, y))
    return out


def render_roi(
    label: int,
    size: tuple[int, int],
    rng: np.random.Generator,
    motif: MotifParams,
    noise_level: float = 0.0,
    color_shift: np.ndarray | None = None,
    slide_id: str = "",
    roi_id: str = "",
) -> SynthSample:
    """Render one RoI. Pure in (arguments, rng state)."""
    h, w = size
    shift = np.zeros(3) if color_shift is None else color_shift
    img = np.empty((h, w, 3))
    img[:] = COLOR_BACKGROUND + shift
    types = np.full((h, w), TYPE_BACKGROUND, dtype=np.uint8)

    nuclei_spots: list[tuple[float, float, float, float, float, float]] = []
    taken: list[tuple[float, float]] = []
    forbidden: list[tuple[float, float, float]] = []

    if motif.stroma_band:
        band_h = int(h * rng.uniform(0.25, 0.38))
        band_y = int(rng.uniform(0.15, 0.55) * (h - band_h))
        phase = rng.uniform(0, 2 * math.pi)
        gy, gx = np.mgrid[band_y : band_y + band_h, 0:w]
        tex = 0.04 * np.sin(2 * math.pi * (gx * 0.12 + gy * 0.04) + phase)
        img[band_y : band_y + band_h] = (
            COLOR_STROMA + shift + tex[..., None]
        )
        types[band_y : band_y + band_h] = TYPE_STROMA

    n_ducts = int(rng.integers(motif.duct_count[0], motif.duct_count[1] + 1)) if motif.duct_count[1] else 0
    r_nuc_hi = max(motif.scatter_radius[1], motif.ring_nucleus_radius[1])
    for _ in range(n_ducts):
        ring_r = float(rng.uniform(*motif.ring_radius))
        outer = ring_r + r_nuc_hi + 6.0
        placed = None
        for _try in range(80):
            cx = float(rng.uniform(outer + 4, w - outer - 4))
            cy = float(rng.uniform(outer + 4, h - outer - 4))
            if _separated([(fx, fy) for fx, fy, _ in forbidden], cx, cy, 2 * outer + 4):
                placed = (cx, cy)
                break
        if placed is None:
            continue
        cx, cy = placed
        _paint_disc(img, types, cx, cy, outer, COLOR_EPITHELIUM + shift, TYPE_EPITHELIUM)
        forbidden.append((cx, cy, outer + 2))
        if motif.plain_duct:
            continue
        if motif.lumen:
            lumen_r = motif.inner_ring_scale * ring_r - r_nuc_hi - 2 if motif.inner_ring else ring_r - r_nuc_hi - 4
            _paint_disc(img, types, cx, cy, max(3.0, lumen_r), COLOR_BACKGROUND + shift, TYPE_BACKGROUND)
        if motif.core == "solid":
            _paint_disc(img, types, cx, cy, max(4.0, 0.42 * ring_r), COLOR_NECROSIS, TYPE_NECROSIS)
        elif motif.core == "speckle":
            _paint_speckle(img, types, cx, cy, max(4.0, 0.45 * ring_r))

        rings = [(ring_r, rng.integers(motif.ring_nuclei[0], motif.ring_nuclei[1] + 1), motif.ring_nucleus_radius, (0.12, 1.2))]
        if motif.inner_ring:
            inner_rad = motif.inner_nucleus_radius or motif.ring_nucleus_radius
            rings.append(
                (
                    motif.inner_ring_scale * ring_r,
                    max(4, int(motif.inner_ring_density * rings[0][1])),
                    inner_rad,
                    motif.inner_ring_jitter,
                )
            )
        for rr, n_ring, rad_range, (ang_jit, rad_jit) in rings:
            sep = 2 * rad_range[1] + 2.0
            offset = rng.uniform(0, 2 * math.pi)
            for j in range(int(n_ring)):
                ang = offset + 2 * math.pi * j / int(n_ring) + rng.uniform(-ang_jit, ang_jit)
                px = cx + (rr + rng.uniform(-rad_jit, rad_jit)) * math.cos(ang)
                py = cy + (rr + rng.uniform(-rad_jit, rad_jit)) * math.sin(ang)
                if not (6 <= px < w - 6 and 6 <= py < h - 6):
                    continue
                if not _separated(taken, px, py, sep):
                    continue
                radius = float(rng.uniform(*rad_range))
                nuclei_spots.append(
                    (px, py, radius, rng.uniform(0.6, 0.95), rng.uniform(0, math.pi), rng.uniform(0.82, 0.97))
                )
                taken.append((px, py))

    n_scatter = int(rng.integers(motif.scatter_count[0], motif.scatter_count[1] + 1)) if motif.scatter_count[1] else 0
    if n_scatter:
        sep = 2 * motif.scatter_radius[1] + 2.5
        pts = _scatter_points(rng, h, w, n_scatter, sep, 8.0, taken, forbidden)
        for px, py in pts:
            radius = float(rng.uniform(*motif.scatter_radius))
            ratio = float(rng.uniform(*motif.elongation))
            nuclei_spots.append(
                (px, py, radius, ratio, rng.uniform(0, math.pi), rng.uniform(0.82, 0.97))
            )

    if noise_level > 0:
        sigma = NOISE_SIGMA_SCALE * noise_level * NOISE_MULT[types]
        img += rng.normal(0.0, 1.0, size=img.shape) * sigma[..., None]

    for px, py, radius, ratio, angle, peak in nuclei_spots:
        _render_nucleus(img, px, py, radius, ratio, angle, peak)

    image = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    nuclei = np.array(
        [(px, py, radius, peak) for px, py, radius, _ratio, _ang, peak in nuclei_spots]
    ).reshape(-1, 4)
    return SynthSample(image=image, nuclei=nuclei, label=int(label), slide_id=slide_id, roi_id=roi_id)


def generate_sample(cfg: SynthConfig, slide_index: int, roi_index: int) -> SynthSample:
    """Render RoI (slide_index, roi_index); the parallel unit of work."""
    counter = slide_index * cfg.rois_per_slide + roi_index
    rng = _roi_rng(cfg.seed, counter)
    dist, shift = slide_style(cfg, slide_index)
    lo, hi = cfg.image_size_range
    height = int(rng.integers(lo, hi + 1))
    width = int(rng.integers(lo, hi + 1))
    label = int(rng.choice(cfg.num_classes, p=dist))
    return render_roi(
        label,
        (height, width),
        rng,
        cfg.motifs()[label],
        noise_level=cfg.noise_level,
        color_shift=shift,
        slide_id=f"slide{slide_index:03d}",
        roi_id=f"slide{slide_index:03d}_roi{roi_index:03d}",
    )


def generate_dataset(cfg: SynthConfig) -> list[SynthSample]:
    """All RoIs of all slides, deterministic in cfg."""
    return [
        generate_sample(cfg, s, r)
        for s in range(cfg.num_slides)
        for r in range(cfg.rois_per_slide)
    ]
