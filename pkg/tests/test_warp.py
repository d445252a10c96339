import numpy as np
import pytest
from hypothesis import given, strategies as st

from splatss.errors import ContractError
from splatss.rasterizer import render
from splatss.scene.camera import CameraPath, camera_at
from splatss.tensor import DTensor
from splatss.warp import (MotionField, field_jacobian, fill_holes, forward_warp, identity_field,
                          motion_field, warp_gradients)

from conftest import SEEDS, axis_camera, orbit_camera, random_scene


def const_field(vx, vy, h, w, z=1.0):
    return MotionField(np.stack([np.broadcast_to(vx, (h, w)), np.broadcast_to(vy, (h, w))])
                       .astype(np.float32), np.ones((1, h, w), bool),
                       np.full((1, h, w), z, np.float32))


def pattern(c, h, w, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, (c, h, w)).astype(np.float32)


# ---------------------------------------------------------------------------
# motion fields


def test_same_camera_gives_zero_field():
    cam = axis_camera()
    depth = np.full((1, 17, 17), 3.0)
    depth[0, :2] = cam.far
    f = motion_field(cam, cam, depth)
    np.testing.assert_allclose(f.vectors, 0, atol=1e-9)
    np.testing.assert_array_equal(f.valid[0, 2:], True)
    np.testing.assert_array_equal(f.valid[0, :2], False)
    assert np.all(np.isinf(f.target_depth[0, :2]))


def test_translation_disparity():
    src = axis_camera(width=32, height=32, f=100.0)
    mid = src.with_pose(np.eye(3), [-0.05, 0.0, 0.0])   # camera centre at x = +0.05
    f = motion_field(src, mid, np.full((1, 32, 32), 10.0))
    ok = f.valid[0]
    assert ok.all()
    np.testing.assert_allclose(f.vectors[0][ok], -0.5, atol=1e-5)
    np.testing.assert_allclose(f.vectors[1][ok], 0.0, atol=1e-6)


def test_scaled_motion_field_and_mismatch():
    hr0 = axis_camera(width=32, height=32, f=40.0)
    hr1 = hr0.with_pose(np.eye(3), [-0.1, 0.0, 0.0])
    lr_depth = np.full((1, 16, 16), 4.0)
    f = motion_field(hr0, hr1, lr_depth, scale=2)
    assert f.shape == (16, 16)
    np.testing.assert_allclose(f.vectors[0][f.valid[0]], -0.5, atol=1e-5)
    with pytest.raises(ContractError):
        motion_field(hr0, hr1, lr_depth)


# ---------------------------------------------------------------------------
# forward warp


def test_zero_field_copies_payload():
    img = pattern(3, 9, 11)
    depth = np.ones((1, 9, 11), np.float32)
    depth[0, 4, 5] = np.inf
    res = forward_warp(img, None, identity_field(9, 11, depth))
    expect = img.copy()
    expect[:, 4, 5] = 0
    np.testing.assert_array_equal(res.payload, expect)
    assert res.hole_mask.sum() == 1 and res.hole_mask[0, 4, 5]
    assert np.isinf(res.zbuf[0, 4, 5])


def test_z_test_and_tie_break():
    h, w = 1, 3
    f = MotionField(np.array([[[0, -1, -2]], [[0, 0, 0]]], np.float32),
                    np.ones((1, h, w), bool), np.array([[[2.0, 1.0, 1.0]]], np.float32))
    res = forward_warp(np.array([[[10.0, 20.0, 30.0]]], np.float32), None, f)
    # z = 1.0 beats z = 2.0, and of the two z = 1.0 sources the lower index wins
    assert res.payload[0, 0, 0] == 20.0 and res.zbuf[0, 0, 0] == 1.0
    assert res.hole_mask[0, 0].tolist() == [False, True, True]


def test_explicit_depth_overrides_field_depth():
    f = MotionField(np.array([[[0, -1]], [[0, 0]]], np.float32), np.ones((1, 1, 2), bool),
                    np.array([[[1.0, 2.0]]], np.float32))
    res = forward_warp(np.array([[[1.0, 2.0]]]), np.array([[[5.0, 3.0]]]), f)
    assert res.payload[0, 0, 0] == 2.0


def test_integer_shift():
    img = pattern(2, 6, 10)
    res = forward_warp(img, None, const_field(3, 0, 6, 10))
    np.testing.assert_array_equal(res.payload[:, :, 3:], img[:, :, :7])
    np.testing.assert_array_equal(res.payload[:, :, :3], 0)
    assert res.hole_mask[0, :, :3].all() and not res.hole_mask[0, :, 3:].any()


@given(st.integers(0, 2**31 - 1))
def test_bijective_field_preserves_multiset(seed):
    rng = np.random.default_rng(seed)
    h, w = 5, 7
    perm = rng.permutation(h * w)
    src_y, src_x = np.divmod(np.arange(h * w), w)
    dst_y, dst_x = np.divmod(perm, w)
    f = MotionField(np.stack([(dst_x - src_x).reshape(h, w), (dst_y - src_y).reshape(h, w)])
                    .astype(np.float32), np.ones((1, h, w), bool),
                    rng.uniform(1, 2, (1, h, w)).astype(np.float32))
    img = rng.uniform(size=(1, h, w))
    res = forward_warp(img, None, f)
    assert not res.hole_mask.any()
    np.testing.assert_array_equal(np.sort(res.payload.ravel()), np.sort(img.ravel()))


def test_apply_reruns_scatter_on_tensors():
    img = pattern(4, 6, 8, seed=2)
    res = forward_warp(img, None, const_field(-2, 1, 6, 8))
    out = res.apply(DTensor(img))
    np.testing.assert_array_equal(out.data, res.payload)


@pytest.mark.parametrize("seed", SEEDS[:8])
def test_static_scene_warp_reproduces_render(seed):
    # dense scenes: sparse ones are dominated by semi-transparent edges
    scene = random_scene(seed, n=3000)
    cam0 = orbit_camera(48, 48, eye=(0.0, 0.4, -3.2))
    cam1 = orbit_camera(48, 48, eye=(0.3, 0.4, -3.1))
    mid = camera_at(CameraPath((cam0, cam1)), 0.5)
    b1, bm = render(scene, cam1), render(scene, mid)
    res = forward_warp(b1.color, None, motion_field(cam1, mid, b1.depth))
    ok = ~res.hole_mask[0]
    assert np.mean(np.abs(res.payload - bm.color)[:, ok]) < 0.05


# ---------------------------------------------------------------------------
# gradient warp


def test_gradient_warp_identity_and_translation():
    G = pattern(6, 8, 8, seed=3) - 0.5
    res = warp_gradients(G, None, identity_field(8, 8))
    np.testing.assert_allclose(res.payload, G, atol=1e-7)
    shifted = warp_gradients(G, None, const_field(2.0, -1.0, 8, 8))
    np.testing.assert_allclose(shifted.payload[:, :7, 2:], G[:, 1:, :6], atol=1e-7)


def test_gradient_warp_stretch():
    h, w = 4, 20
    xx = np.tile(np.arange(w, dtype=np.float32), (h, 1))
    f = const_field(0.1 * xx, 0.0, h, w)
    np.testing.assert_allclose(field_jacobian(f)[0, 0], 1.1, atol=1e-6)
    # the ramp I(x) = 0.3·x has dI/dx = 0.3; after the 1.1× stretch it is 0.3 / 1.1
    G = np.zeros((6, h, w), np.float32)
    G[:3] = 0.3
    res = warp_gradients(G, None, f)
    ok = ~res.hole_mask[0]
    np.testing.assert_allclose(res.payload[:3][:, ok], 0.3 / 1.1, rtol=1e-5)
    np.testing.assert_allclose(res.payload[3:][:, ok], 0.0, atol=1e-7)


def test_gradient_warp_foldover_is_hole():
    h, w = 3, 9
    xx = np.tile(np.arange(w, dtype=np.float32), (h, 1))
    res = warp_gradients(np.ones((6, h, w), np.float32), None, const_field(-xx, 0.0, h, w))
    assert res.hole_mask.all()
    np.testing.assert_array_equal(res.payload, 0)


# ---------------------------------------------------------------------------
# hole filling


def test_fill_holes_keeps_valid_pixels_and_is_convex():
    rng = np.random.default_rng(5)
    img = rng.uniform(0.2, 0.7, (3, 13, 10)).astype(np.float32)
    hole = rng.uniform(size=(1, 13, 10)) < 0.3
    out = fill_holes(img, hole)
    np.testing.assert_allclose(out[:, ~hole[0]], img[:, ~hole[0]], atol=1e-6)
    assert out.min() >= 0.2 - 1e-6 and out.max() <= 0.7 + 1e-6


def test_fill_holes_single_sample_and_degenerate_masks():
    img = np.zeros((1, 8, 8), np.float32)
    img[0, 5, 2] = 0.4
    hole = np.ones((1, 8, 8), bool)
    hole[0, 5, 2] = False
    np.testing.assert_allclose(fill_holes(img, hole), 0.4, atol=1e-7)
    np.testing.assert_array_equal(fill_holes(img, np.zeros_like(hole)), img)
    np.testing.assert_array_equal(fill_holes(img, np.ones_like(hole)), img)
