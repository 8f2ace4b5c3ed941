"""Smoke tests for the python bindings."""

import json
import math

import numpy as np
import pytest

import crtbev


def grid():
    return crtbev.GridSpec(x_cells=16, y_cells=16, cell_size=0.5, origin=(-4.0, -4.0))


def test_import_and_version():
    assert crtbev.__version__


def test_azimuths():
    spec = crtbev.GridSpec(x_cells=1, y_cells=1, cell_size=10.0, origin=(0.0, -5.0))
    assert crtbev.azimuth_of_cell(spec, 0, 0) == pytest.approx(0.0)
    # principal column of a forward camera looks straight ahead
    az = crtbev.azimuth_of_column(
        fx=32.0, cx=32.5, image_w=80, image_h=48, camera_yaw=0.0, column=32
    )
    assert az == pytest.approx(0.0, abs=1e-12)
    # one focal length right of center: image-x right maps to ego -y
    az = crtbev.azimuth_of_column(
        fx=32.0, cx=32.5, image_w=80, image_h=48, camera_yaw=0.0, column=64
    )
    assert az == pytest.approx(-math.pi / 4, abs=1e-12)


def test_footprint_area_and_overlap():
    poly = crtbev.bev_footprint(0.0, 0.0, 2.0, 1.0, 0.0)
    assert poly.shape == (4, 2)
    # shoelace area equals length * width
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    assert area == pytest.approx(2.0)

    spec = grid()
    objects = np.array([[0.25, 0.25, 4.0, 4.0, 0.0, 0.0, 0.0]])
    cell = spec.x_cells // 2  # cell (8, 8) spans [0, 0.5]^2, inside the box
    assert crtbev.cell_box_overlap_ratio(spec, cell, cell, objects) == pytest.approx(1.0)


def test_targets_and_warp_roundtrip():
    spec = grid()
    objects = np.array([[0.0, 0.0, 2.0, 1.0, 0.0, 4.0, 0.0]])
    motion, occupancy = crtbev.make_targets(spec, objects, 0.5)
    assert motion.shape == (2, 16, 16)
    assert occupancy.shape == (1, 16, 16)
    assert occupancy.sum() > 0
    assert np.all(motion[0][occupancy[0] >= 0.5] == 4.0)

    # warping the occupancy indicator by its own motion moves it 4 cells in x
    warped = crtbev.warp(occupancy, motion, spec, t_s=0.5, tau_v=1.0)
    src = np.argwhere(occupancy[0] > 0)
    dst = np.argwhere(warped[0] > 0)
    assert sorted((x + 4, y) for x, y in map(tuple, src)) == sorted(map(tuple, dst))

    # zero motion leaves the grid untouched
    identity = crtbev.warp(occupancy, np.zeros_like(motion), spec)
    assert np.array_equal(identity, occupancy)


def test_detect_peaks():
    spec = grid()
    occupancy = np.zeros((1, 16, 16))
    occupancy[0, 5, 9] = 0.9
    motion = np.zeros((2, 16, 16))
    motion[0, 5, 9] = 2.5
    dets = crtbev.detect(occupancy, motion, spec, tau_det=0.5, nms_radius_cells=2.0)
    assert len(dets) == 1
    assert dets[0]["center"] == pytest.approx(spec.cell_center(5, 9))
    assert dets[0]["velocity"][0] == pytest.approx(2.5)


SMALL_CONFIG = {
    "seed": 5,
    "n_sequences": 2,
    "n_frames": 3,
    "scene": {
        "grid": {"x_cells": 32, "y_cells": 32, "cell_size": 0.5, "origin": [-8.0, -8.0]},
        "n_objects": 3,
        "radar_points_per_object": 6,
        "clutter_points": 8,
        "rig": {"count": 2, "image_w": 24, "image_h": 16, "channels": 6},
    },
    "mvf": {"channels": 6, "rca_m": 16, "depth_bins": 12, "depth_max": 24.0},
    "mgtf": {"n_history": 2},
    "mfe": {"fit": {"gd_iterations": 25}},
}


def test_generate_summary_is_deterministic():
    a = crtbev.generate_summary(json.dumps(SMALL_CONFIG))
    b = crtbev.generate_summary(json.dumps(SMALL_CONFIG))
    assert a["fingerprint"] == b["fingerprint"]
    assert len(a["sequences"]) == 2
    assert a["sequences"][0]["frames"] == 3

    reseeded = dict(SMALL_CONFIG, seed=6)
    c = crtbev.generate_summary(json.dumps(reseeded))
    assert c["fingerprint"] != a["fingerprint"]


def test_run_compare_shape():
    report = crtbev.run_compare(json.dumps(SMALL_CONFIG))
    assert len(report["bins"]) == 5
    assert len(report["gains"]) == 5
    assert 0.0 <= report["mean_ap_motion_aware"] <= 1.0
