"""Windowed structural similarity (SSIM).

11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 255 by
default; mean over all fully-contained windows. RGB inputs score as the mean
of the per-channel values.

The hot per-window kernel has two interchangeable backends: a compiled
Cython extension and a numpy fallback, chosen at import (override with
FSS_SSIM_BACKEND=cython|numpy).
"""

import os

import numpy as np

from ..errors import DataError
from . import _ssim_np

try:
    from . import _ssim_cy
except ImportError:
    _ssim_cy = None

_requested = os.environ.get("FSS_SSIM_BACKEND", "").lower()
if _requested == "numpy":
    _backend, SSIM_BACKEND = _ssim_np, "numpy"
elif _requested == "cython":
    if _ssim_cy is None:
        raise ImportError("FSS_SSIM_BACKEND=cython but the compiled kernel "
                          "is unavailable")
    _backend, SSIM_BACKEND = _ssim_cy, "cython"
elif _ssim_cy is not None:
    _backend, SSIM_BACKEND = _ssim_cy, "cython"
else:
    _backend, SSIM_BACKEND = _ssim_np, "numpy"

WINDOW_SIZE = 11
SIGMA = 1.5
K1 = 0.01
K2 = 0.03


def gaussian_window(size=WINDOW_SIZE, sigma=SIGMA):
    """Normalized 2-D Gaussian weighting window."""
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return np.ascontiguousarray(win / win.sum())


_WINDOW = gaussian_window()


def _ssim_gray(a, b, data_range):
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    return _backend.ssim_mean(np.ascontiguousarray(a, dtype=np.float64),
                              np.ascontiguousarray(b, dtype=np.float64),
                              _WINDOW, c1, c2)


def ssim(a, b, data_range=255.0):
    """SSIM of two images of identical shape (>= 11x11), in [-1, 1].

    2-D arrays score directly; H x W x C arrays score as the mean over
    channels.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DataError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3):
        raise DataError(f"expected 2-D or 3-D image, got shape {a.shape}")
    if a.shape[0] < WINDOW_SIZE or a.shape[1] < WINDOW_SIZE:
        raise DataError(
            f"images must be at least {WINDOW_SIZE}x{WINDOW_SIZE}, "
            f"got {a.shape[:2]}")
    if a.ndim == 2:
        return _ssim_gray(a, b, data_range)
    vals = [_ssim_gray(a[:, :, c], b[:, :, c], data_range)
            for c in range(a.shape[2])]
    return float(np.mean(vals))
