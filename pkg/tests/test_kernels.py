"""Compiled and numpy kernel backends must agree bit for bit."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from dynband import _kernels

py = _kernels.python_backend
cy = _kernels.compiled_backend
needs_compiled = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def rng_cases(seed, n):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        yield rng


@needs_compiled
def test_backend_selected_at_import():
    assert _kernels.BACKEND == "cython"


def test_pure_python_env_var_forces_fallback():
    code = "from dynband import _kernels; print(_kernels.BACKEND)"
    env = dict(os.environ, DYNBAND_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
def test_dilate_equal():
    for rng in rng_cases(0, 50):
        h, w = rng.integers(1, 30, 2)
        m = (rng.random((h, w)) < 0.1).astype(np.uint8)
        r = int(rng.integers(0, 6))
        assert np.array_equal(cy.dilate_square(m, r), py.dilate_square(m, r))


@needs_compiled
def test_min_eig_response_bit_identical():
    for rng in rng_cases(1, 30):
        h, w = rng.integers(2, 40, 2)
        img = rng.uniform(0, 255, (h, w))
        if rng.random() < 0.3:
            img = np.rint(img)
        assert np.array_equal(cy.min_eig_response(img), py.min_eig_response(img))


@needs_compiled
def test_grid_best_equal():
    for rng in rng_cases(2, 30):
        h, w = rng.integers(1, 50, 2)
        resp = np.rint(rng.uniform(-2, 10, (h, w)))  # plenty of ties
        cell = int(rng.integers(4, 12))
        thr = float(rng.uniform(0, 5))
        for a, b in zip(cy.grid_best(resp, cell, thr), py.grid_best(resp, cell, thr)):
            assert np.array_equal(a, b)


@needs_compiled
def test_classify_rules_equal():
    from scenes import random_filter_frame
    from dynband.dyn_filter import _prepare, DepthBandParams, keypoint_pixels

    for rng in rng_cases(3, 100):
        kps, masks, depth = random_filter_frame(rng)
        union, _, boxes, limits = _prepare(masks, depth, DepthBandParams(), int(rng.integers(0, 4)))
        iu, iv = keypoint_pixels(kps, depth.width, depth.height)
        args = (iu, iv, union, depth.depth, depth.valid.astype(np.uint8), boxes, limits)
        assert np.array_equal(cy.classify_rules(*args), py.classify_rules(*args))


@needs_compiled
def test_count_inliers_equal():
    from dynband.geom import rigid_fit_batch

    for rng in rng_cases(4, 20):
        n = int(rng.integers(3, 200))
        prev = rng.normal(size=(n, 3))
        curr = prev + rng.normal(scale=0.05, size=(n, 3))
        idx = rng.integers(0, n, (64, 3))
        R, t, _ = rigid_fit_batch(curr[idx], prev[idx])
        thr2 = float(rng.uniform(0.001, 0.02))
        got = cy.count_inliers(np.ascontiguousarray(R), np.ascontiguousarray(t), prev, curr, thr2)
        assert np.array_equal(got, py.count_inliers(R, t, prev, curr, thr2))
        assert np.array_equal(got, py.inlier_mask(R, t, prev, curr, thr2).sum(axis=1))


def test_public_api_identical_under_both_backends(monkeypatch):
    """Corner detection and classification give identical results with the fallback."""
    from scenes import random_filter_frame
    from dynband import dyn_filter, masks

    rng = np.random.default_rng(5)
    frames = [random_filter_frame(rng) for _ in range(20)]
    img = rng.uniform(0, 1, (48, 64))
    native = ([dyn_filter.classify_keypoints(*f).labels for f in frames], dyn_filter.detect_corners(img))
    for name in ("dilate_square", "min_eig_response", "grid_best", "classify_rules", "count_inliers"):
        monkeypatch.setattr(_kernels, name, getattr(py, name))
    fallback = ([dyn_filter.classify_keypoints(*f).labels for f in frames], dyn_filter.detect_corners(img))
    assert all(np.array_equal(a, b) for a, b in zip(native[0], fallback[0]))
    assert native[1] == fallback[1]
    assert masks._kernels is _kernels and importlib.import_module("dynband._kernels") is _kernels
