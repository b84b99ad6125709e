"""Numpy fallback backend for windowed SSIM.

Same valid-window semantics as the compiled kernel: windows fully inside the
image, Gaussian-weighted moments, mean over all window positions.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def ssim_mean(a, b, window, c1, c2):
    """Mean SSIM over all valid window positions of two 2-D float64 images."""
    k = window.shape[0]
    wa = sliding_window_view(a, (k, k))
    wb = sliding_window_view(b, (k, k))

    mu1 = np.einsum("ijkl,kl->ij", wa, window)
    mu2 = np.einsum("ijkl,kl->ij", wb, window)
    e11 = np.einsum("ijkl,kl->ij", sliding_window_view(a * a, (k, k)), window)
    e22 = np.einsum("ijkl,kl->ij", sliding_window_view(b * b, (k, k)), window)
    e12 = np.einsum("ijkl,kl->ij", sliding_window_view(a * b, (k, k)), window)

    var1 = e11 - mu1 * mu1
    var2 = e22 - mu2 * mu2
    cov = e12 - mu1 * mu2

    num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
    return float(np.mean(num / den))
