"""scikit-learn style wrappers around the two networks.

``GassUpsampler`` fits on sequences of LR frame bundles with HR targets and
transforms a bundle sequence into HR frames. ``LtfiInterpolator`` fits on
sequences of prepared gaps and predicts the midpoint frames.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import gass, ltfi
from .errors import DimensionError, NumericError
from .harness.train import GassSequence, LtfiGap, TrainConfig, train_gass, train_ltfi
from .rasterizer import FrameBundle
from .tensor import no_grad


def check_image(x, channels: int = 3, name: str = "image") -> np.ndarray:
    """Return ``x`` as a finite float32 C×H×W array."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != channels:
        raise DimensionError(f"{name} must be {channels}×H×W, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} contains non-finite values")
    return x


def check_bundle(b) -> FrameBundle:
    if not isinstance(b, FrameBundle):
        raise TypeError(f"expected a FrameBundle, got {type(b).__name__}")
    check_image(b.color, 3, "color")
    check_image(b.grad_x, 3, "grad_x")
    check_image(b.grad_y, 3, "grad_y")
    return b


def check_sequences(X, y=None):
    X = [list(seq) for seq in X]
    if not X or any(len(s) == 0 for s in X):
        raise ValueError("need at least one non-empty sequence")
    if y is not None:
        y = [list(seq) for seq in y]
        if len(y) != len(X) or any(len(a) != len(b) for a, b in zip(X, y)):
            raise ValueError("X and y sequences differ in length")
    return X, y


class GassUpsampler(TransformerMixin, BaseEstimator):
    def __init__(self, scale: int = 2, steps: int = 200, learning_rate: float = 1e-3,
                 seed: int = 0, no_gtrr: bool = False):
        self.scale = scale
        self.steps = steps
        self.learning_rate = learning_rate
        self.seed = seed
        self.no_gtrr = no_gtrr

    def fit(self, X, y):
        """X: sequences of LR FrameBundles; y: matching HR colour targets."""
        X, y = check_sequences(X, y)
        data = []
        for bundles, targets in zip(X, y):
            bundles = [check_bundle(b) for b in bundles]
            targets = [check_image(t, 3, "target") for t in targets]
            for b, t in zip(bundles, targets):
                h, w = b.resolution
                if t.shape[1:] != (h * self.scale, w * self.scale):
                    raise DimensionError(f"target {t.shape[1:]} is not {self.scale}× {b.resolution}")
            data.append(GassSequence(bundles, targets))
        cfg = TrainConfig(steps=self.steps, seed=self.seed, scale=self.scale, lr=self.learning_rate,
                          no_gtrr=self.no_gtrr)
        self.model_, self.checkpoint_, self.log_ = train_gass(cfg, data)
        return self

    def transform(self, X) -> np.ndarray:
        """Upsample one sequence of LR bundles, carrying the recurrent state."""
        check_is_fitted(self, "model_")
        bundles = [check_bundle(b) for b in X]
        flags = gass.GassFlags(no_gtrr=self.no_gtrr)
        return np.stack(gass.upsample_sequence(self.model_, bundles, flags))

    predict = transform

    @classmethod
    def hermite(cls, scale: int = 2) -> "GassUpsampler":
        """An unfitted-by-training estimator at the closed-form initialization."""
        est = cls(scale=scale, steps=0)
        est.model_ = gass.GassModel(scale)
        return est


class LtfiInterpolator(BaseEstimator):
    def __init__(self, scale: int = 2, steps: int = 200, learning_rate: float = 1e-3,
                 seed: int = 0, no_gi: bool = False, no_tru: bool = False):
        self.scale = scale
        self.steps = steps
        self.learning_rate = learning_rate
        self.seed = seed
        self.no_gi = no_gi
        self.no_tru = no_tru

    def fit(self, X, y=None):
        """X: sequences of LtfiGap records (inputs, target, loss fields)."""
        X, _ = check_sequences(X)
        for seq in X:
            for gap in seq:
                if not isinstance(gap, LtfiGap):
                    raise TypeError("LtfiInterpolator.fit expects sequences of LtfiGap")
        cfg = TrainConfig(steps=self.steps, seed=self.seed, scale=self.scale, lr=self.learning_rate,
                          no_gi=self.no_gi, no_tru=self.no_tru)
        self.model_, self.checkpoint_, self.log_ = train_ltfi(cfg, X)
        return self

    def predict(self, X) -> np.ndarray:
        """Interpolate a sequence of prepared gaps (``ltfi.Prepared``)."""
        check_is_fitted(self, "model_")
        flags = ltfi.LtfiFlags(no_gi=self.no_gi, no_tru=self.no_tru)
        state = ltfi.TemporalState.fresh()
        out = []
        with no_grad():
            for prep in X:
                prep = prep.prep if isinstance(prep, LtfiGap) else prep
                img, state, _ = ltfi.ltfi_step(self.model_, prep, state, flags)
                out.append(img.data)
        return np.stack(out)
