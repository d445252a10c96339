import numpy as np
import pytest

from splatss.rasterizer import (ALPHA_MAX, ALPHA_MIN, LOW_PASS, Projection, project, read_ppm,
                                render, write_ppm)

from conftest import SEEDS, axis_camera, orbit_camera, random_scene, splat_scene


def manual_projection(means, sigmas, opacities, colors, depths):
    """Isotropic pixel-space splats, bypassing the EWA step."""
    means = np.asarray(means, np.float64).reshape(-1, 2)
    k = len(means)
    var = np.asarray(sigmas, np.float64).reshape(k) ** 2
    cov = var[:, None, None] * np.eye(2)
    return Projection(mean2d=means, cov2d=cov, inv_cov2d=np.linalg.inv(cov),
                      depth=np.asarray(depths, np.float64).reshape(k),
                      color=np.asarray(colors, np.float64).reshape(k, 3),
                      opacity=np.asarray(opacities, np.float64).reshape(k),
                      radius=3 * np.sqrt(var), normal=np.zeros((k, 3)),
                      source_index=np.arange(k))


def oracle_pixel(proj, x, y, alpha_cap=True):
    """Expanded-sum evaluation: each weight built from its own product."""
    alphas = []
    for g in proj:
        d = np.array([x, y], np.float64) - g.mean2d
        a = g.opacity * np.exp(-0.5 * d @ g.inv_cov2d @ d)
        a = min(a, ALPHA_MAX) if alpha_cap else a
        alphas.append(0.0 if a < ALPHA_MIN else a)
    color = np.zeros(3)
    for i, a in enumerate(alphas):
        color += proj.color[i] * a * np.prod([1 - b for b in alphas[:i]])
    return color, np.prod([1 - a for a in alphas])


# ---------------------------------------------------------------------------
# projection


def test_projection_on_optical_axis():
    cam = axis_camera(f=20.0)
    d, s = 4.0, 0.1
    proj = project(splat_scene([[0, 0, d]], s, 0.5, [1, 0, 0]), cam)
    np.testing.assert_allclose(proj.mean2d[0], [cam.cx, cam.cy], atol=1e-9)
    expect = ((cam.fx * s / d) ** 2 + LOW_PASS) * np.eye(2)
    np.testing.assert_allclose(proj.cov2d[0], expect, rtol=1e-6)


def test_projection_culls_and_sorts():
    cam = axis_camera(near=0.5)
    scene = splat_scene([[0, 0, 2.0], [0, 0, 0.2], [0, 0, 1.0], [0, 0, -1.0], [50, 0, 1.0]],
                        0.05, [0.5] * 5, [[1, 0, 0]] * 5)
    proj = project(scene, cam)
    np.testing.assert_array_equal(proj.source_index, [2, 0])
    np.testing.assert_allclose(proj.depth, [1.0, 2.0])


# ---------------------------------------------------------------------------
# closed-form pixels


def test_single_gaussian_half_alpha():
    cam = axis_camera()
    b = render(splat_scene([[0, 0, 4.0]], 0.1, 0.5, [1, 0, 0]), cam)
    c = int(cam.cx)
    np.testing.assert_allclose(b.color[:, c, c], [0.5, 0, 0], atol=1e-6)
    assert b.alpha_acc[0, c, c] == pytest.approx(0.5, abs=1e-6)
    assert b.depth[0, c, c] == pytest.approx(0.5 * 4.0 + 0.5 * cam.far, rel=1e-6)


def test_two_coincident_gaussians():
    cam = axis_camera()
    b = render(splat_scene([[0, 0, 3.0], [0, 0, 4.0]], 0.1, [0.5, 0.5],
                           [[1, 1, 1], [0, 0, 0]]), cam)
    c = int(cam.cx)
    np.testing.assert_allclose(b.color[:, c, c], 0.5, atol=1e-6)
    assert 1 - b.alpha_acc[0, c, c] == pytest.approx(0.25, abs=1e-6)


def test_single_splat_derivative():
    cam = axis_camera()
    proj = manual_projection([[cam.cx, cam.cy]], 2.0, 1.0, [1, 1, 1], 3.0)
    b = render(None, cam, projection=proj, alpha_cap=False)
    x, y = int(cam.cx) + 2, int(cam.cy)
    assert b.color[0, y, x] == pytest.approx(np.exp(-0.5), abs=1e-6)
    assert b.grad_x[0, y, x] == pytest.approx(-0.5 * np.exp(-0.5), abs=1e-6)
    assert b.grad_y[0, y, x] == pytest.approx(0.0, abs=1e-6)


def test_background_contract():
    cam = axis_camera()
    b = render(splat_scene([[0, 0, 4.0]], 0.02, 0.9, [1, 1, 1]), cam)
    np.testing.assert_array_equal(b.color[:, 0, 0], 0)
    assert b.depth[0, 0, 0] == pytest.approx(cam.far)
    np.testing.assert_array_equal(b.normal[:, 0, 0], 0)
    assert b.nv[0, 0, 0] == 0


def test_normal_faces_camera():
    cam = axis_camera()
    scene = splat_scene([[0, 0, 4.0]], [[0.3, 0.3, 0.01]], 0.9, [1, 1, 1])
    b = render(scene, cam)
    c = int(cam.cx)
    np.testing.assert_allclose(b.normal[:, c, c], [0, 0, -1], atol=1e-6)
    assert b.nv[0, c, c] == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# invariants


@pytest.mark.parametrize("seed", SEEDS)
def test_front_to_back_matches_expanded_sum(seed):
    rng = np.random.default_rng(seed)
    cam = axis_camera(width=20, height=20)
    k = int(rng.integers(1, 6))
    proj = manual_projection(rng.uniform(4, 16, (k, 2)), rng.uniform(1, 4, k),
                             rng.uniform(0.1, 1.0, k), rng.uniform(0, 1, (k, 3)),
                             np.sort(rng.uniform(1, 5, k)))
    b = render(None, cam, projection=proj)
    for x, y in rng.integers(0, 20, (12, 2)):
        color, trans = oracle_pixel(proj, x, y)
        np.testing.assert_allclose(b.color[:, y, x], color, atol=1e-6)
        assert 1 - b.alpha_acc[0, y, x] == pytest.approx(trans, abs=1e-6)


@pytest.mark.parametrize("seed", SEEDS)
def test_transmittance_bounds_and_weights(seed):
    b = render(random_scene(seed), orbit_camera(32, 32))
    assert np.all((b.alpha_acc >= 0) & (b.alpha_acc <= 1))
    assert np.all((b.color >= 0) & (b.color <= 1 + 1e-6))
    # colours are bounded by the accumulated opacity they came from
    assert np.all(b.color <= b.alpha_acc + 1e-5)


@pytest.mark.parametrize("seed", SEEDS[:5])
def test_storage_order_invariance(seed):
    scene = random_scene(seed, n=40)
    cam = orbit_camera(32, 32)
    perm = np.random.default_rng(seed).permutation(scene.count)
    a, b = render(scene, cam), render(scene.permuted(perm), cam)
    for name, arr in a.buffers().items():
        np.testing.assert_array_equal(arr, b.buffers()[name], err_msg=name)


def test_parallel_render_is_bit_identical():
    scene = random_scene(3, n=200)
    cam = orbit_camera(48, 40)
    a, b = render(scene, cam), render(scene, cam, workers=4)
    for name, arr in a.buffers().items():
        assert arr.tobytes() == b.buffers()[name].tobytes(), name


@pytest.mark.parametrize("seed", SEEDS)
def test_gradients_match_finite_differences(seed):
    scene = random_scene(seed, n=20)
    cam = orbit_camera(40, 40)
    b = render(scene, cam)
    # shifting the principal point by -h samples the image at x + h
    shift = lambda dx, dy: render(scene, cam.__class__(  # noqa: E731
        **{**cam.__dict__, "cx": cam.cx - dx, "cy": cam.cy - dy})).color
    fd_x = shift(0.5, 0) - shift(-0.5, 0)
    fd_y = shift(0, 0.5) - shift(0, -0.5)
    assert np.mean(np.abs(b.grad_x - fd_x)) < 1e-2
    assert np.mean(np.abs(b.grad_y - fd_y)) < 1e-2


# ---------------------------------------------------------------------------
# output files


def test_ppm_roundtrip(tmp_path):
    rgb = np.random.default_rng(0).uniform(-0.2, 1.2, (3, 9, 11)).astype(np.float32)
    write_ppm(tmp_path / "a.ppm", rgb)
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n11 9\n255\n")
    back = read_ppm(tmp_path / "a.ppm")
    np.testing.assert_allclose(back, np.clip(rgb, 0, 1), atol=0.5 / 255 + 1e-6)


def test_bundle_dump(tmp_path):
    b = render(random_scene(0), orbit_camera(16, 16))
    written = b.dump(tmp_path)
    assert len(written) == len(b.buffers()) + 1
