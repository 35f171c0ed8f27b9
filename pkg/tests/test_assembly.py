"""Hierarchy assembly: assignment totality, consistency with the label map,
and full-pipeline composition on generated RoIs."""

import numpy as np
import pytest

from hactnet.assembly import assign_cells, build_hact
from hactnet.cell_graph import CgParams
from hactnet.features import detect_nuclei
from hactnet.graph import deserialize, serialize, validate_hact
from hactnet.synth import SynthConfig, generate_sample
from hactnet.tissue_graph import SuperpixelLabeling, TgParams


def test_left_right_assignment():
    lm = np.zeros((20, 40), dtype=np.int64)
    lm[:, 20:] = 1
    lab = SuperpixelLabeling(label_map=lm, num_regions=2)
    out = assign_cells(np.array([[5.0, 10.0], [35.0, 3.0]]), lab)
    assert out.tolist() == [0, 1]


def test_boundary_pixel_unambiguous():
    lm = np.zeros((10, 10), dtype=np.int64)
    lm[:, 5:] = 1
    lab = SuperpixelLabeling(label_map=lm, num_regions=2)
    # x = 4.5 rounds to 4 under round-half-even, the pixel's own label wins
    out = assign_cells(np.array([[5.0, 5.0]]), lab)
    assert out.tolist() == [lm[5, 5]]


def test_out_of_bounds_clamped_with_warning():
    lm = np.zeros((10, 10), dtype=np.int64)
    lab = SuperpixelLabeling(label_map=lm, num_regions=1)
    with pytest.warns(UserWarning, match="clamped"):
        out = assign_cells(np.array([[-3.0, 4.0], [12.0, 20.0]]), lab)
    assert out.tolist() == [0, 0]


def test_random_assignments_match_label_map():
    rng = np.random.default_rng(0)
    lm = rng.integers(0, 7, size=(64, 64)).astype(np.int64)
    lab = SuperpixelLabeling(label_map=lm, num_regions=7)
    pts = rng.uniform(0, 63, size=(500, 2))
    out = assign_cells(pts, lab)
    assert ((out >= 0) & (out < 7)).all()
    for (x, y), r in zip(pts, out):
        assert lm[int(round(y)), int(round(x))] == r


def test_region_to_node_remap():
    lm = np.zeros((8, 8), dtype=np.int64)
    lm[:, 4:] = 1
    lab = SuperpixelLabeling(label_map=lm, num_regions=2)
    out = assign_cells(np.array([[6.0, 2.0]]), lab, region_to_node=np.array([5, 9]))
    assert out.tolist() == [9]


@pytest.fixture(scope="module")
def built_sample():
    cfg = SynthConfig(seed=21, num_slides=2, rois_per_slide=1, noise_level=0.1)
    sample = generate_sample(cfg, 0, 0)
    nuclei = detect_nuclei(sample.image)
    hact = build_hact(
        sample.image,
        nuclei,
        CgParams(),
        TgParams(target_superpixels=120),
        slide_id=sample.slide_id,
        label=sample.label,
    )
    return hact


def test_build_hact_valid_and_total(built_sample):
    assert validate_hact(built_sample) == []
    assert len(built_sample.assignment) == built_sample.cell_graph.num_nodes


def test_build_hact_hierarchy_is_compressive(built_sample):
    assert built_sample.cell_graph.num_nodes > built_sample.tissue_graph.num_nodes


def test_build_hact_round_trip(built_sample):
    back = deserialize(serialize(built_sample))
    assert validate_hact(back) == []
    assert serialize(back) == serialize(built_sample)
