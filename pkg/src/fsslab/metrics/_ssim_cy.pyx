# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernel for windowed SSIM (valid-window, Gaussian weights)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def ssim_mean(double[:, ::1] a, double[:, ::1] b, double[:, ::1] window,
              double c1, double c2):
    """Mean SSIM over all valid window positions of two 2-D float64 images."""
    cdef Py_ssize_t h = a.shape[0]
    cdef Py_ssize_t w = a.shape[1]
    cdef Py_ssize_t k = window.shape[0]
    cdef Py_ssize_t oh = h - k + 1
    cdef Py_ssize_t ow = w - k + 1
    cdef Py_ssize_t i, j, u, v
    cdef double mu1, mu2, e11, e22, e12, wgt, va, vb
    cdef double var1, var2, cov, num, den
    cdef double acc = 0.0

    for i in range(oh):
        for j in range(ow):
            mu1 = 0.0
            mu2 = 0.0
            e11 = 0.0
            e22 = 0.0
            e12 = 0.0
            for u in range(k):
                for v in range(k):
                    wgt = window[u, v]
                    va = a[i + u, j + v]
                    vb = b[i + u, j + v]
                    mu1 += wgt * va
                    mu2 += wgt * vb
                    # grouped so the kernel is exactly symmetric in (a, b)
                    e11 += wgt * (va * va)
                    e22 += wgt * (vb * vb)
                    e12 += wgt * (va * vb)
            var1 = e11 - mu1 * mu1
            var2 = e22 - mu2 * mu2
            cov = e12 - mu1 * mu2
            num = (2.0 * mu1 * mu2 + c1) * (2.0 * cov + c2)
            den = (mu1 * mu1 + mu2 * mu2 + c1) * (var1 + var2 + c2)
            acc += num / den

    return acc / (oh * ow)
