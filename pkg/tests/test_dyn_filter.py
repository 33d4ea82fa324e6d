import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dynband.dyn_filter import (DepthBandParams, Keypoint, classify_keypoints, depth_band,
                                detect_corners, instance_band, keypoint_pixels, object_depth_range,
                                read_keypoints_csv, removal_mask, roi_depth_range,
                                write_keypoints_csv)
from dynband.errors import EmptyImage, InsufficientDepth, InvalidParams
from dynband.masks import InstanceMask
from dynband.tum import DepthFrame
from scenes import random_filter_frame


def rect_mask(iid, shape, v0, v1, u0, u1):
    bm = np.zeros(shape, dtype=bool)
    bm[v0:v1 + 1, u0:u1 + 1] = True
    return InstanceMask.from_bitmask(iid, "person", 1.0, bm)


def test_band_alpha_zero_is_object_range():
    assert depth_band(1.25, 1.75, 3.0, 0.0) == (1.25, 1.75)


def test_band_substitution():
    lo, hi = depth_band(1.0, 1.5, 2.0, 0.1)
    assert lo == pytest.approx(0.8, abs=1e-15) and hi == pytest.approx(1.7, abs=1e-15)


def test_band_lower_clamp():
    lo, hi = depth_band(0.1, 0.2, 2.0, 0.2)
    assert lo == 0.0 and hi == pytest.approx(0.6, abs=1e-15)


@pytest.mark.parametrize("args", [(1.0, 2.0, 1.0, -0.1), (1.0, 2.0, -1.0, 0.1), (2.0, 1.0, 1.0, 0.1)])
def test_band_invalid(args):
    with pytest.raises(InvalidParams):
        depth_band(*args)


@settings(max_examples=200, deadline=None)
@given(m=st.floats(0.1, 10), w=st.floats(0, 5), d=st.floats(0, 10), a1=st.floats(0, 1), a2=st.floats(0, 1))
def test_band_width_and_nesting(m, w, d, a1, a2):
    a1, a2 = min(a1, a2), max(a1, a2)
    lo1, hi1 = depth_band(m, m + w, d, a1)
    lo2, hi2 = depth_band(m, m + w, d, a2)
    assert lo2 <= lo1 and hi1 <= hi2
    if m - a1 * d > 0:
        assert hi1 - lo1 == pytest.approx(w + 2 * a1 * d, rel=1e-12, abs=1e-12)


def test_object_range_uniform():
    z = np.full((10, 10), 2.0)
    m = rect_mask(1, z.shape, 2, 6, 2, 6)
    assert object_depth_range(m, DepthFrame.from_meters(z)) == (2.0, 2.0)


def test_object_range_drops_boundary_bleed():
    rng = np.random.default_rng(0)
    z = rng.uniform(1.95, 2.05, (20, 20))
    m = rect_mask(1, z.shape, 0, 19, 0, 19)
    bleed = rng.permutation(400)[:40]
    z.flat[bleed] = 4.0
    lo, hi = object_depth_range(m, DepthFrame.from_meters(z))
    core = np.delete(z.ravel(), bleed)
    # oracle: histogram over the constructed grid keeps every bin of the core cluster
    assert (lo, hi) == oracles.mode_run_range(z.ravel().tolist(), 0.1, 0.1)
    assert (lo, hi) == (core.min(), core.max())
    assert hi < 4.0


def test_object_range_insufficient_depth():
    z = np.zeros((8, 8))
    z[0, 0] = 1.0
    m = rect_mask(1, z.shape, 2, 5, 2, 5)
    with pytest.raises(InsufficientDepth):
        object_depth_range(m, DepthFrame.from_meters(z))


def test_object_range_within_unrestricted_extent():
    rng = np.random.default_rng(1)
    for _ in range(100):
        kps, masks, depth = random_filter_frame(rng)
        for m in masks:
            vals = depth.depth[m.bitmask & depth.valid]
            if vals.size < 5:
                continue
            lo, hi = object_depth_range(m, depth)
            assert vals.min() <= lo <= hi <= vals.max()
            assert (lo, hi) == oracles.mode_run_range(vals.tolist(), 0.1, 0.1)


def test_roi_range():
    z = np.full((6, 6), 2.0)
    assert roi_depth_range((1, 1, 4, 4), DepthFrame.from_meters(z)) == (2.0, 2.0, 0.0)
    z = np.zeros((4, 4))
    z[1, 1], z[1, 2], z[2, 1] = 1.0, 3.0, 2.2
    assert roi_depth_range((0, 0, 3, 3), DepthFrame.from_meters(z)) == (1.0, 3.0, 2.0)


def test_roi_range_matches_scan():
    rng = np.random.default_rng(2)
    for _ in range(50):
        z = rng.uniform(0.5, 5, (12, 15))
        z[rng.random(z.shape) < 0.3] = 0
        depth = DepthFrame.from_meters(z)
        u0, u1 = sorted(rng.integers(0, 15, 2))
        v0, v1 = sorted(rng.integers(0, 12, 2))
        vals = [z[v, u] for v in range(v0, v1 + 1) for u in range(u0, u1 + 1) if z[v, u] > 0]
        if not vals:
            with pytest.raises(InsufficientDepth):
                roi_depth_range((u0, v0, u1, v1), depth)
            continue
        assert roi_depth_range((u0, v0, u1, v1), depth) == (min(vals), max(vals), max(vals) - min(vals))


def test_roi_outside_frame():
    with pytest.raises(InvalidParams):
        roi_depth_range((0, 0, 9, 2), DepthFrame.from_meters(np.ones((4, 4))))


def test_no_dynamic_masks_all_static():
    kps = [Keypoint(1.0, 2.0), Keypoint(3.4, 0.6)]
    cls = classify_keypoints(kps, [], DepthFrame.from_meters(np.ones((5, 5))))
    assert cls.static_kps == kps and cls.rejected_mask == [] and cls.rejected_depth == []


def test_mask_rule_has_priority_over_depth():
    z = np.full((20, 20), 3.0)
    z[5:10, 5:10] = 1.0
    m = rect_mask(1, z.shape, 5, 9, 5, 9)
    kp_on_mask = Keypoint(6.0, 6.0)  # depth 1.0 is in band, but the mask wins
    kp_dilated = Keypoint(11.0, 7.0)  # 2 px outside the mask, within radius 3
    cls = classify_keypoints([kp_on_mask, kp_dilated], [m], DepthFrame.from_meters(z))
    assert cls.rejected_mask == [kp_on_mask, kp_dilated]


def test_depth_rule_inside_bbox_only():
    z = np.full((30, 30), 5.0)
    bm = np.zeros((30, 30), dtype=bool)
    bm[5:25, 5] = True  # thin L-shaped object: bbox is much larger than the mask
    bm[24, 5:25] = True
    z[bm] = 2.0
    z[10, 15] = 2.05  # background in the bbox at object depth
    z[10, 28] = 2.05  # same depth outside the bbox
    m = InstanceMask.from_bitmask(1, "person", 1.0, bm)
    inside, outside, far = Keypoint(15.0, 10.0), Keypoint(28.0, 10.0), Keypoint(15.0, 15.0)
    cls = classify_keypoints([inside, outside, far], [m], DepthFrame.from_meters(z))
    assert cls.rejected_depth == [inside]
    assert cls.static_kps == [outside, far]
    band = cls.band_per_instance[1]
    assert (band.m_obj, band.M_obj, band.d) == (2.0, 2.0, 3.0)
    assert band.lo == pytest.approx(1.7) and band.hi == pytest.approx(2.3)


def test_invalid_depth_keypoint_is_not_depth_rejected():
    z = np.full((20, 20), 2.0)
    z[3, 15] = 0.0
    m = rect_mask(1, z.shape, 2, 5, 2, 5)
    big = rect_mask(2, z.shape, 16, 17, 16, 17)
    kps = [Keypoint(15.0, 3.0)]
    # keypoint pixel has no depth: only the mask rule could reject it
    cls = classify_keypoints(kps, [m, big], DepthFrame.from_meters(z), dilation_radius=0)
    assert cls.static_kps == kps


def test_insufficient_depth_instance_keeps_mask_rule():
    z = np.full((20, 20), 2.0)
    z[2:6, 2:6] = 0.0
    m = rect_mask(1, z.shape, 2, 5, 2, 5)
    cls = classify_keypoints([Keypoint(3, 3), Keypoint(10, 10)], [m], DepthFrame.from_meters(z))
    assert cls.counts() == {"static": 1, "rejected_mask": 1, "rejected_depth": 0}
    assert 1 not in cls.band_per_instance


def test_keypoint_rounding_is_half_up():
    iu, iv = keypoint_pixels([Keypoint(0.5, 1.49), Keypoint(2.4999, 2.5)], 5, 5)
    assert iu.tolist() == [1, 2] and iv.tolist() == [1, 3]


def test_keypoint_outside_frame():
    with pytest.raises(InvalidParams):
        keypoint_pixels([Keypoint(4.6, 0.0)], 5, 5)
    with pytest.raises(InvalidParams):
        keypoint_pixels([Keypoint(float("nan"), 0.0)], 5, 5)


def test_classify_matches_rule_replay_oracle():
    rng = np.random.default_rng(123)
    for _ in range(150):
        kps, masks, depth = random_filter_frame(rng)
        params = DepthBandParams(alpha=float(rng.uniform(0, 0.5)),
                                 mode_window=float(rng.choice([0.05, 0.1, 0.25])))
        radius = int(rng.integers(0, 4))
        cls = classify_keypoints(kps, masks, depth, params, radius)
        expect = oracles.classify([(k.u, k.v) for k in kps], [m.bitmask for m in masks],
                                  depth.depth, depth.valid, params.alpha, params.mode_window,
                                  params.min_valid_pixels, params.run_fraction, radius)
        assert cls.labels.tolist() == expect


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_partition_is_exact(seed):
    kps, masks, depth = random_filter_frame(np.random.default_rng(seed))
    cls = classify_keypoints(kps, masks, depth)
    ids = [id(k) for k in cls.static_kps + cls.rejected_mask + cls.rejected_depth]
    assert len(ids) == len(set(ids)) == len(kps)
    assert sorted(ids) == sorted(id(k) for k in kps)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a1=st.floats(0, 0.5), a2=st.floats(0, 0.5))
def test_alpha_monotone(seed, a1, a2):
    a1, a2 = min(a1, a2), max(a1, a2)
    kps, masks, depth = random_filter_frame(np.random.default_rng(seed))
    l1 = classify_keypoints(kps, masks, depth, DepthBandParams(alpha=a1)).labels
    l2 = classify_keypoints(kps, masks, depth, DepthBandParams(alpha=a2)).labels
    assert not np.any((l1 == 2) & (l2 == 0))
    assert np.array_equal(l1 == 1, l2 == 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), r1=st.integers(0, 5), r2=st.integers(0, 5))
def test_dilation_monotone(seed, r1, r2):
    r1, r2 = min(r1, r2), max(r1, r2)
    kps, masks, depth = random_filter_frame(np.random.default_rng(seed))
    l1 = classify_keypoints(kps, masks, depth, dilation_radius=r1).labels
    l2 = classify_keypoints(kps, masks, depth, dilation_radius=r2).labels
    assert not np.any((l1 == 1) & (l2 != 1))


def test_removal_mask_agrees_with_classification():
    rng = np.random.default_rng(5)
    for _ in range(30):
        kps, masks, depth = random_filter_frame(rng)
        rm = removal_mask(masks, depth)
        cls = classify_keypoints(kps, masks, depth)
        iu, iv = keypoint_pixels(kps, depth.width, depth.height)
        assert np.array_equal(rm[iv, iu], cls.labels != 0)


def test_instance_band_fields():
    z = np.full((10, 10), 4.0)
    z[2:5, 2:5] = 1.0
    band = instance_band(rect_mask(1, z.shape, 2, 4, 2, 4), DepthFrame.from_meters(z))
    assert (band.m_obj, band.M_obj, band.m_roi, band.M_roi, band.d) == (1.0, 1.0, 1.0, 1.0, 0.0)


def test_params_validation():
    for kw in ({"alpha": -1}, {"mode_window": 0}, {"min_valid_pixels": 0}, {"run_fraction": 2}):
        with pytest.raises(InvalidParams):
            DepthBandParams(**kw)


def test_corners_constant_image():
    assert detect_corners(np.full((20, 20), 7.0)) == []


def test_corners_empty_image():
    with pytest.raises(EmptyImage):
        detect_corners(np.zeros((0, 0)))


def test_corners_of_a_white_square():
    img = np.zeros((40, 40))
    img[15:25, 12:22] = 1.0
    kps = detect_corners(img, max_corners=20)
    corners = [(12, 15), (21, 15), (12, 24), (21, 24)]
    top = [(k.u, k.v) for k in kps[:8]]
    for cu, cv in corners:
        assert any(abs(u - cu) <= 1 and abs(v - cv) <= 1 for u, v in top)
    # responses are the exact brute-force minimum eigenvalues
    resp = oracles.min_eig_response(img)
    for k in kps:
        assert k.response == pytest.approx(resp[int(k.v), int(k.u)], rel=1e-12)


def test_corner_response_matches_brute_force():
    from dynband import _kernels

    rng = np.random.default_rng(9)
    for shape in [(2, 2), (5, 7), (16, 13)]:
        img = rng.uniform(0, 255, shape)
        assert np.allclose(_kernels.min_eig_response(img), oracles.min_eig_response(img),
                           rtol=1e-10, atol=1e-8)


def test_max_corners_one_is_global_max():
    rng = np.random.default_rng(10)
    img = rng.uniform(0, 1, (32, 32))
    resp = oracles.min_eig_response(img)
    (k,) = detect_corners(img, max_corners=1)
    v, u = np.unravel_index(np.argmax(resp), resp.shape)
    assert (k.u, k.v) == (u, v)


def test_corners_one_per_cell_sorted():
    rng = np.random.default_rng(11)
    kps = detect_corners(rng.uniform(0, 1, (48, 64)), max_corners=500, cell=8)
    cells = {(int(k.v) // 8, int(k.u) // 8) for k in kps}
    assert len(cells) == len(kps)
    resp = [k.response for k in kps]
    assert resp == sorted(resp, reverse=True)


def test_keypoint_csv_roundtrip():
    kps = [Keypoint(1.25, 2.5, 0.1), Keypoint(0.1 + 0.2, 3.0, 0.0)]
    text = write_keypoints_csv(kps, {"landmark_id": [4, 5]})
    assert text.splitlines()[0] == "u,v,response,landmark_id"
    assert read_keypoints_csv(text) == kps


def test_keypoint_csv_needs_header():
    with pytest.raises(InvalidParams):
        read_keypoints_csv("1,2,3\n")
    with pytest.raises(InvalidParams):
        read_keypoints_csv("u,v,response\n1,x,3\n")
