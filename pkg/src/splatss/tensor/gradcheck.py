"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import DTensor, backward, no_grad, precision


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(max |n|, max |a|, 1e-12), a norm-wise relative error."""
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def gradcheck(fn: Callable[[], DTensor], tensors: Sequence[DTensor], h: float = 1e-3,
              max_entries: int | None = None, rng=None) -> float:
    """Compare backward() against central differences of ``fn``.

    ``fn`` takes no arguments and returns a scalar DTensor built from
    ``tensors``. The check runs in float64 (values of ``tensors`` are upcast
    for the duration and restored afterwards). Returns the worst relative
    error over all tensors. ``max_entries`` subsamples large tensors.
    """
    originals = [t.data for t in tensors]
    try:
        with precision(np.float64):
            for t in tensors:
                t.data = t.data.astype(np.float64)
                t.grad = None
            loss = fn()
            backward(loss)
            worst = 0.0
            for t in tensors:
                analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                flat = t.data.reshape(-1)
                idx = np.arange(flat.size)
                if max_entries is not None and flat.size > max_entries:
                    r = rng if rng is not None else np.random.default_rng(0)
                    idx = np.sort(r.choice(flat.size, max_entries, replace=False))
                numeric = np.empty(len(idx))
                for k, i in enumerate(idx):
                    with no_grad():
                        numeric[k] = _central(fn, flat, i, h)
                worst = max(worst, relative_error(analytic.reshape(-1)[idx], numeric))
            for t in tensors:
                t.grad = None
            return worst
    finally:
        for t, o in zip(tensors, originals):
            t.data = o


def _central(fn, flat, i, h):
    old = flat[i]
    flat[i] = old + h
    fp = fn().data.item()
    flat[i] = old - h
    fm = fn().data.item()
    flat[i] = old
    return (fp - fm) / (2 * h)

