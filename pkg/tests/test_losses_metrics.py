import numpy as np
import pytest
from hypothesis import given, strategies as st

from splatss import losses as L
from splatss import tensor as T
from splatss.errors import ConfigurationError, DimensionError
from splatss.metrics import PSNR_CAP, MetricReport, psnr, ssim
from splatss.tensor import DTensor
from splatss.tensor.gradcheck import gradcheck
from splatss.warp import MotionField, identity_field

from conftest import SEEDS


def images(seed, shape=(3, 8, 8)):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=shape), rng.uniform(size=shape)


def value(t):
    return float(t.data)


# ---------------------------------------------------------------------------
# closed forms


def test_charbonnier_closed_forms():
    X = np.full((1, 4, 4), 0.3)
    assert value(L.charbonnier(X, X)) == pytest.approx(1e-3, rel=1e-6)
    with T.precision(np.float64):
        assert value(L.charbonnier(np.array([[[3.0]]]), np.zeros((1, 1, 1)), eps=1e-6)) == pytest.approx(3, abs=1e-6)


def test_laplace_closed_forms():
    a = np.zeros((1, 5, 5))
    assert value(L.laplace_loss(a, a)) == 0
    assert value(L.laplace_loss(np.full((2, 5, 5), 0.7), np.full((2, 5, 5), 0.1))) == pytest.approx(0, abs=1e-7)
    delta = a.copy()
    delta[0, 2, 2] = 1
    lap = L.laplacian(delta).data[0]
    assert lap[2, 2] == -4 and lap[1, 2] == lap[3, 2] == lap[2, 1] == lap[2, 3] == 1
    assert value(L.laplace_loss(delta, a)) == pytest.approx(8 / 25)


def test_occlusion_loss_closed_forms():
    I = np.random.default_rng(0).uniform(0.2, 0.8, (3, 8, 8))
    f = identity_field(8, 8)
    assert value(L.occlusion_loss(I, f, f, I, I)) == pytest.approx(0, abs=1e-7)
    assert value(L.occlusion_loss(I + 0.1, f, f, I, I)) == pytest.approx(0.2, abs=1e-6)


def test_occlusion_loss_ignores_holes_and_empty_fields():
    I = np.zeros((3, 4, 4))
    target = np.zeros((3, 4, 4))
    target[:, :, 0] = 5.0       # only reachable through the hole column
    shift = MotionField(np.stack([np.ones((4, 4)), np.zeros((4, 4))]).astype(np.float32),
                        np.ones((1, 4, 4), bool), np.ones((1, 4, 4), np.float32))
    assert value(L.occlusion_loss(I, shift, shift, target, target)) == 0
    empty = MotionField(np.zeros((2, 4, 4), np.float32), np.zeros((1, 4, 4), bool),
                        np.full((1, 4, 4), np.inf, np.float32))
    before = L.empty_occlusion_count
    assert value(L.occlusion_loss(I, empty, empty, target, target)) == 0
    assert L.empty_occlusion_count == before + 2


def test_alpha_reg_is_rms():
    assert value(L.alpha_reg(np.array([[[0.3, 0.4]]]))) == pytest.approx(np.sqrt(0.125))


def test_psnr_closed_forms():
    X = np.full((3, 16, 16), 0.5)
    assert psnr(X, X + 0.1) == pytest.approx(20.0, abs=1e-9)
    assert psnr(X, X) == PSNR_CAP
    Y = np.random.default_rng(1).uniform(size=X.shape)
    perm = np.random.default_rng(2).permutation(X.size)
    assert psnr(X.ravel()[perm], Y.ravel()[perm]) == pytest.approx(psnr(X, Y), abs=1e-12)


def test_ssim_closed_forms():
    X = np.random.default_rng(3).uniform(size=(3, 16, 16))
    assert ssim(X, X) == pytest.approx(1.0, abs=1e-12)
    a, b = np.full((16, 16), 0.2), np.full((16, 16), 0.4)
    expect = (2 * 0.08 + 1e-4) / (0.04 + 0.16 + 1e-4)
    assert ssim(a, b) == pytest.approx(expect, abs=1e-9)
    assert round(expect, 4) == 0.8001
    with pytest.raises(DimensionError):
        ssim(np.zeros((3, 8, 8)), np.zeros((3, 8, 8)))


# ---------------------------------------------------------------------------
# properties


@given(st.integers(0, 2**31 - 1))
def test_floors_symmetry_and_definiteness(seed):
    X, Y = images(seed)
    assert value(L.charbonnier(X, Y)) >= 1e-3
    for fn in (L.charbonnier, L.laplace_loss, L.perceptual_substitute):
        assert value(fn(X, Y)) == pytest.approx(value(fn(Y, X)), rel=1e-6)
    for fn in (L.laplace_loss, L.perceptual_substitute):
        assert value(fn(X, X)) == 0
    assert value(L.perceptual_substitute(X, Y)) > 0
    A, B = images(seed, (3, 12, 12))
    assert ssim(A, B) == pytest.approx(ssim(B, A), abs=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_perceptual_monotone_along_interpolation(seed):
    X, Y = images(seed)
    vals = [value(L.perceptual_substitute(X, (1 - t) * Y + t * X)) for t in np.linspace(0, 1, 5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0


def test_perceptual_off_mode():
    X, Y = images(0)
    terms = L.ltfi_terms(X, Y, np.full((1, 8, 8), 0.5), cfg=L.LossConfig(perceptual_mode="off"))
    assert value(terms["perceptual"]) == 0


def test_config_validation_and_shapes():
    with pytest.raises(ConfigurationError):
        L.LossConfig(charbonnier_eps=0)
    with pytest.raises(ConfigurationError):
        L.LossConfig(lambda_occ=-1)
    with pytest.raises(ConfigurationError):
        L.LossConfig(perceptual_mode="vgg")
    with pytest.raises(DimensionError):
        L.charbonnier(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))
    with pytest.raises(DimensionError):
        psnr(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# totals


@pytest.mark.parametrize("seed", SEEDS[:5])
def test_totals_equal_manual_sums(seed):
    X, Y = images(seed)
    alpha = np.random.default_rng(seed).uniform(size=(1, 8, 8))
    cfg = L.LossConfig(lambda_lap=0.3, lambda_perc=0.7, lambda_occ=0.11, lambda_alpha=0.05)
    occ = L.occlusion_loss(X, identity_field(8, 8), identity_field(8, 8), Y, Y)
    manual = (np.float32(value(L.charbonnier(X, Y)))
              + np.float32(value(L.perceptual_substitute(X, Y))) * np.float32(0.7)
              + np.float32(value(occ)) * np.float32(0.11)
              + np.float32(value(L.alpha_reg(alpha))) * np.float32(0.05))
    assert value(L.ltfi_total(X, Y, alpha, occ, cfg)) == manual
    g = np.float32(value(L.charbonnier(X, Y))) + np.float32(value(L.laplace_loss(X, Y))) * np.float32(0.3)
    assert value(L.gass_total(X, Y, cfg)) == g


# ---------------------------------------------------------------------------
# gradients


H = 1e-3


def shifted_field(n=8):
    return MotionField(np.stack([np.ones((n, n)), np.zeros((n, n))]).astype(np.float32),
                       np.ones((1, n, n), bool), np.ones((1, n, n), np.float32))


def pyramid_args(d, levels=3):
    """Every argument the multiscale gradient L1 takes an absolute value of."""
    out = []
    for lvl in range(levels):
        if lvl:
            C, Hh, W = d.shape
            d = d.reshape(C, Hh // 2, 2, W // 2, 2).mean(axis=(2, 4))
        out += [np.diff(d, axis=-1).ravel(), np.diff(d, axis=-2).ravel()]
    return np.concatenate(out + [d.ravel()])


def clear_of_kinks(seed, kink_args, margin=2 * H):
    """Draw (X, Y) until no |·| argument lies within reach of a step of h, so
    a central difference stays on one smooth piece. The margin covers the
    largest coefficient of a single pixel in any argument."""
    rng = np.random.default_rng(seed)
    while True:
        X = rng.uniform(0.2, 0.8, (2, 8, 8))
        Y = X + rng.choice([-1, 1], X.shape) * rng.uniform(0.05, 0.2, X.shape)
        if np.min(np.abs(kink_args(X, Y))) > margin:
            return X, Y


@pytest.mark.parametrize("seed", SEEDS)
def test_loss_gradchecks(seed):
    X, Y = clear_of_kinks(seed, lambda X, Y: X - Y)
    Xt = DTensor(X, requires_grad=True)
    assert gradcheck(lambda: L.charbonnier(Xt, Y), [Xt], h=H) < 1e-3

    X, Y = clear_of_kinks(seed, lambda X, Y: L.laplacian(X - Y).data, margin=5 * H)
    Xt = DTensor(X, requires_grad=True)
    assert gradcheck(lambda: L.laplace_loss(Xt, Y), [Xt], h=H) < 1e-3

    X, Y = clear_of_kinks(seed, lambda X, Y: pyramid_args(X - Y))
    Xt = DTensor(X, requires_grad=True)
    assert gradcheck(lambda: L.perceptual_substitute(Xt, Y), [Xt], h=H) < 1e-3

    f = shifted_field()
    X, Y = clear_of_kinks(seed, lambda X, Y: (np.roll(X, 1, axis=-1) - Y)[..., 1:])
    Xt = DTensor(X, requires_grad=True)
    # frame 1 is compared through the identity field, so keep it kink-free too
    Y1 = X + np.where(X - Y > 0, 0.1, -0.1)
    assert gradcheck(lambda: L.occlusion_loss(Xt, f, identity_field(8, 8), Y, Y1), [Xt], h=H) < 1e-3

    a = DTensor(np.random.default_rng(seed).uniform(0.1, 0.9, (1, 8, 8)), requires_grad=True)
    assert gradcheck(lambda: L.alpha_reg(a), [a], h=H) < 1e-3


# ---------------------------------------------------------------------------
# report


def test_metric_report_roundtrip():
    X, Y = images(1, (3, 16, 16))
    rep = MetricReport()
    rep.add(0, 0.0, "gass", X, Y)
    rep.add(1, 0.5, "ltfi", X, X)
    assert rep.psnr_per_frame[1] == PSNR_CAP
    assert rep.psnr == pytest.approx((psnr(X, Y) + PSNR_CAP) / 2)
    parsed = MetricReport.from_text(rep.to_text())
    assert float(parsed["psnr"]) == pytest.approx(rep.psnr, abs=1e-4) and parsed["frames"] == "2"
    assert rep.to_csv().splitlines()[0] == "frame,time,kind,psnr,ssim"
