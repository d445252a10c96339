"""Training objectives for the super-sampling and interpolation networks."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from . import warp
from .errors import ConfigurationError, DimensionError
from .tensor import DTensor

logger = logging.getLogger(__name__)

LAPLACE_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], np.float32).reshape(1, 1, 3, 3)
PERCEPTUAL_MODES = ("off", "multiscale-gradient")
PYRAMID_LEVELS = 3

# how many occlusion-loss calls found no unoccluded pixel
empty_occlusion_count = 0


@dataclass(frozen=True)
class LossConfig:
    charbonnier_eps: float = 1e-3
    lambda_lap: float = 0.1
    lambda_perc: float = 0.2
    lambda_occ: float = 0.05
    lambda_alpha: float = 0.2
    perceptual_mode: str = "multiscale-gradient"

    def __post_init__(self):
        if self.charbonnier_eps <= 0:
            raise ConfigurationError("charbonnier_eps must be positive")
        for k in ("lambda_lap", "lambda_perc", "lambda_occ", "lambda_alpha"):
            if getattr(self, k) < 0:
                raise ConfigurationError(f"{k} must be non-negative")
        if self.perceptual_mode not in PERCEPTUAL_MODES:
            raise ConfigurationError(f"perceptual_mode must be one of {PERCEPTUAL_MODES}")

    def as_dict(self) -> dict:
        return asdict(self)


def _pair(X, Y):
    X, Y = T.as_tensor(X), T.as_tensor(Y)
    if X.shape != Y.shape:
        raise DimensionError(f"loss inputs differ in shape: {X.shape} vs {Y.shape}")
    return X, Y


def charbonnier(X, Y, eps: float = 1e-3) -> DTensor:
    X, Y = _pair(X, Y)
    d = T.sub(X, Y)
    return T.mean(T.sqrt(T.add(T.mul(d, d), eps * eps)))


def laplacian(X) -> DTensor:
    """5-point Laplacian per channel with replicate padding."""
    X = T.as_tensor(X)
    C, H, W = X.shape[-3:]
    x = T.reshape(X, (-1, 1, H, W))
    out = T.conv2d(T.pad_replicate(x, 1), LAPLACE_KERNEL)
    return T.reshape(out, X.shape)


def laplace_loss(X, Y) -> DTensor:
    X, Y = _pair(X, Y)
    # the Laplacian is linear, so apply it once to the difference
    return T.mean(T.abs(laplacian(T.sub(X, Y))))


def occlusion_loss(I_mid, field_to0: warp.MotionField, field_to1: warp.MotionField,
                   I0, I1) -> DTensor:
    """Sum over both end frames of the L1 between the warped midpoint
    prediction and that frame, averaged over unoccluded pixels."""
    global empty_occlusion_count
    I_mid = T.as_tensor(I_mid)
    C = I_mid.shape[0]
    total = None
    for field, target in ((field_to0, I0), (field_to1, I1)):
        res = warp.forward_warp(np.zeros((1,) + I_mid.shape[-2:], np.float32), None, field)
        keep = ~res.hole_mask
        n = int(keep.sum())
        if n == 0:
            empty_occlusion_count += 1
            logger.warning("occlusion loss: no unoccluded pixels")
            term = T.as_tensor(np.float32(0.0))
        else:
            warped = res.apply(I_mid)
            mask = keep.astype(np.float32)
            diff = T.mul(T.abs(T.sub(warped, np.asarray(target, np.float32))), mask)
            term = T.div(T.sum(diff), float(n * C))
        total = term if total is None else T.add(total, term)
    return total


def alpha_reg(alpha) -> DTensor:
    """Root mean square of the blend weights."""
    a = T.as_tensor(alpha)
    return T.sqrt(T.mean(T.mul(a, a)))


def perceptual_substitute(X, Y, levels: int = PYRAMID_LEVELS) -> DTensor:
    """Multi-scale gradient L1 over an average-pooled pyramid.

    At every level the L1 of the difference in finite-difference gradients
    is taken; the coarsest level adds the plain intensity L1 so that only
    equal inputs reach zero.
    """
    X, Y = _pair(X, Y)
    d = T.sub(X, Y)
    total = None
    for lvl in range(levels):
        if lvl:
            d = T.avg_pool2(d)
        H, W = d.shape[-2:]
        terms = []
        if W > 1:
            gx = T.sub(T.getitem(d, (Ellipsis, slice(None), slice(1, None))),
                       T.getitem(d, (Ellipsis, slice(None), slice(0, W - 1))))
            terms.append(T.mean(T.abs(gx)))
        if H > 1:
            gy = T.sub(T.getitem(d, (Ellipsis, slice(1, None), slice(None))),
                       T.getitem(d, (Ellipsis, slice(0, H - 1), slice(None))))
            terms.append(T.mean(T.abs(gy)))
        for t in terms:
            total = t if total is None else T.add(total, t)
    base = T.mean(T.abs(d))
    return base if total is None else T.add(total, base)


def gass_total(X, Y, cfg: LossConfig = LossConfig()) -> DTensor:
    return T.add(charbonnier(X, Y, cfg.charbonnier_eps),
                 T.mul(laplace_loss(X, Y), cfg.lambda_lap))


def ltfi_terms(pred, target, alpha, occlusion=None, cfg: LossConfig = LossConfig()) -> dict:
    """Individual terms of the interpolation objective (unweighted)."""
    terms = {"charbonnier": charbonnier(pred, target, cfg.charbonnier_eps)}
    if cfg.perceptual_mode == "off":
        terms["perceptual"] = T.as_tensor(np.float32(0.0))
    else:
        terms["perceptual"] = perceptual_substitute(pred, target)
    terms["occlusion"] = T.as_tensor(np.float32(0.0)) if occlusion is None else occlusion
    terms["alpha"] = alpha_reg(alpha)
    return terms


def weighted_sum(terms: dict, cfg: LossConfig) -> DTensor:
    total = terms["charbonnier"]
    total = T.add(total, T.mul(terms["perceptual"], cfg.lambda_perc))
    total = T.add(total, T.mul(terms["occlusion"], cfg.lambda_occ))
    return T.add(total, T.mul(terms["alpha"], cfg.lambda_alpha))


def ltfi_total(pred, target, alpha, occlusion=None, cfg: LossConfig = LossConfig()) -> DTensor:
    return weighted_sum(ltfi_terms(pred, target, alpha, occlusion, cfg), cfg)
