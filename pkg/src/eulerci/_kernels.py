"""Numba kernels for periodic B-spline interpolation on the unit torus.

The interpolation model: a field sampled on an M^3 periodic grid is
represented by spline coefficients c (same shape) obtained by dividing the
spectrum by the spline's frequency symbol, so the spline interpolates the
samples exactly at grid points.  Evaluation is a tensor-product sum of
(order+1)^3 taps with periodic wrap.  All kernels are single-threaded and
deterministic.
"""

import numpy as np
from numba import njit

# integer samples of the centered cardinal B-spline, used for the prefilter
# symbol H(theta) = sum_j B(j) exp(-i j theta)
BSPLINE_INT_SAMPLES = {
    3: {0: 2.0 / 3.0, 1: 1.0 / 6.0},
    5: {0: 11.0 / 20.0, 1: 13.0 / 60.0, 2: 1.0 / 120.0},
    7: {0: 151.0 / 315.0, 1: 397.0 / 1680.0, 2: 1.0 / 42.0, 3: 1.0 / 5040.0},
}


def spline_symbol(order, m):
    """Frequency response of the degree-`order` cardinal B-spline on m points."""
    k = np.arange(m // 2 + 1)
    th = 2.0 * np.pi * k / m
    samples = BSPLINE_INT_SAMPLES[order]
    sym = np.full(m // 2 + 1, samples[0])
    for j, b in samples.items():
        if j > 0:
            sym = sym + 2.0 * b * np.cos(j * th)
    return sym


@njit(cache=True, fastmath=True, inline="always")
def _w_cubic(t, w):
    # taps at offsets -1, 0, 1, 2 relative to floor(x)
    for j in range(4):
        u = abs(t - (j - 1))
        if u < 1.0:
            w[j] = (4.0 - 6.0 * u * u + 3.0 * u * u * u) / 6.0
        elif u < 2.0:
            v = 2.0 - u
            w[j] = v * v * v / 6.0
        else:
            w[j] = 0.0


@njit(cache=True, fastmath=True, inline="always")
def _w_quintic(t, w):
    # taps at offsets -2 .. 3
    for j in range(6):
        u = abs(t - (j - 2))
        if u < 1.0:
            u2 = u * u
            w[j] = 0.55 - 0.5 * u2 + 0.25 * u2 * u2 - u2 * u2 * u / 12.0
        elif u < 2.0:
            w[j] = (17.0 / 40.0 + u * (5.0 / 8.0 + u * (-7.0 / 4.0 + u * (
                5.0 / 4.0 + u * (-3.0 / 8.0 + u / 24.0)))))
        elif u < 3.0:
            v = 3.0 - u
            w[j] = v ** 5 / 120.0
        else:
            w[j] = 0.0


@njit(cache=True, fastmath=True, inline="always")
def _w_septic(t, w):
    # taps at offsets -3 .. 4; Cox-de Boor divided form, 1/7! = 1/5040.
    # The alternating sum cancels to ~1e-13; renormalize so the weights
    # sum to 1 exactly (B-splines are a partition of unity).
    tot = 0.0
    for j in range(8):
        x = t - (j - 3)
        s = 0.0
        sign = 1.0
        binom = 1.0
        for k in range(9):
            u = x + 4.0 - k
            if u > 0.0:
                s += sign * binom * u ** 7
            sign = -sign
            binom = binom * (8 - k) / (k + 1)
        w[j] = s / 5040.0
        tot += w[j]
    for j in range(8):
        w[j] /= tot


@njit(cache=True, fastmath=True)
def eval_spline_scalar(coef, xs, ys, zs, order, out):
    """Evaluate a periodic spline (coef on an M^3 grid) at points in grid units."""
    m0, m1, m2 = coef.shape
    wx = np.empty(8)
    wy = np.empty(8)
    wz = np.empty(8)
    ntap = order + 1
    lo = (order - 1) // 2  # taps at floor(x) - lo .. floor(x) - lo + order
    for p in range(xs.shape[0]):
        bx = int(np.floor(xs[p]))
        by = int(np.floor(ys[p]))
        bz = int(np.floor(zs[p]))
        tx = xs[p] - bx
        ty = ys[p] - by
        tz = zs[p] - bz
        if order == 3:
            _w_cubic(tx, wx)
            _w_cubic(ty, wy)
            _w_cubic(tz, wz)
        elif order == 5:
            _w_quintic(tx, wx)
            _w_quintic(ty, wy)
            _w_quintic(tz, wz)
        else:
            _w_septic(tx, wx)
            _w_septic(ty, wy)
            _w_septic(tz, wz)
        acc = 0.0
        for jx in range(ntap):
            ix = (bx + jx - lo) % m0
            if ix < 0:
                ix += m0
            sx = wx[jx]
            for jy in range(ntap):
                iy = (by + jy - lo) % m1
                if iy < 0:
                    iy += m1
                sxy = sx * wy[jy]
                row = coef[ix, iy]
                for jz in range(ntap):
                    iz = (bz + jz - lo) % m2
                    if iz < 0:
                        iz += m2
                    acc += sxy * wz[jz] * row[iz]
        out[p] = acc
    return out
