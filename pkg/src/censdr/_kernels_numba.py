"""Numba-accelerated kernels, mirroring `_kernels_numpy`.

Scalar routines are jit-compiled and wrapped in 1-D array loops with the GIL
released, so grid cells can be evaluated from worker threads in parallel.
All array arguments must be contiguous 1-D float64 (the `gauss2d` layer
takes care of broadcasting and reshaping). Import fails if numba is
unavailable; `_backend` falls back to numpy then.
"""

import math

import numpy as np
from numba import njit

_SQRT2 = math.sqrt(2.0)
_SQRT_TWOPI = math.sqrt(2.0 * math.pi)
_TWOPI = 2.0 * math.pi

_GL6_X, _GL6_W = np.polynomial.legendre.leggauss(6)
_GL12_X, _GL12_W = np.polynomial.legendre.leggauss(12)
_GL20_X, _GL20_W = np.polynomial.legendre.leggauss(20)

_JIT = dict(cache=True, nogil=True, fastmath=False)


@njit(**_JIT)
def _phid(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(**_JIT)
def _log_phid(x):
    if x >= 6.0:
        return math.log1p(-0.5 * math.erfc(x / _SQRT2))
    if x > -37.0:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    # asymptotic expansion of the lower tail
    xsq = x * x
    series = 1.0 - 1.0 / xsq + 3.0 / xsq ** 2 - 15.0 / xsq ** 3 + 105.0 / xsq ** 4
    return -0.5 * xsq - math.log(-x) - 0.5 * math.log(_TWOPI) + math.log(series)


@njit(**_JIT)
def _bvnd_scalar(dh, dk, r):
    """P(X > dh, Y > dk), standard bivariate normal, finite args, |r| <= 1."""
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if abs(r) < 0.925:
        if abs(r) > 0.0:
            if abs(r) < 0.3:
                xg, wg = _GL6_X, _GL6_W
            elif abs(r) < 0.75:
                xg, wg = _GL12_X, _GL12_W
            else:
                xg, wg = _GL20_X, _GL20_W
            hs = 0.5 * (h * h + k * k)
            asr = math.asin(r)
            for i in range(xg.shape[0]):
                sn = math.sin(asr * (xg[i] + 1.0) * 0.5)
                bvn += wg[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
            bvn = bvn * asr / (2.0 * _TWOPI)
        bvn += _phid(-h) * _phid(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if abs(r) < 1.0:
            as_ = (1.0 - r) * (1.0 + r)
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / as_ + hk) * 0.5
            if asr > -100.0:
                bvn = a * math.exp(asr) * (
                    1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * as_ * as_ / 5.0
                )
            if -hk < 100.0:
                b = math.sqrt(bs)
                bvn -= math.exp(-hk * 0.5) * _SQRT_TWOPI * _phid(-b / a) * b * (
                    1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0
                )
            a = a * 0.5
            # leggauss returns the full symmetric node set: one pass covers it
            for i in range(_GL20_X.shape[0]):
                xs = (a * (_GL20_X[i] + 1.0)) ** 2
                rs = math.sqrt(1.0 - xs)
                asr1 = -(bs / xs + hk) * 0.5
                if asr1 > -100.0:
                    bvn += a * _GL20_W[i] * math.exp(asr1) * (
                        math.exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                        - (1.0 + c * xs * (1.0 + d * xs))
                    )
            bvn = -bvn / _TWOPI
        if r > 0.0:
            bvn += _phid(-max(h, k))
        else:
            bvn = -bvn
            if k > h:
                if h < 0.0:
                    bvn += _phid(k) - _phid(h)
                else:
                    bvn += _phid(-h) - _phid(-k)
    if bvn < 0.0:
        return 0.0
    if bvn > 1.0:
        return 1.0
    return bvn


@njit(**_JIT)
def norm_cdf(x):
    out = np.empty(x.shape[0], dtype=np.float64)
    for i in range(x.shape[0]):
        out[i] = _phid(x[i])
    return out


@njit(**_JIT)
def norm_pdf(x):
    out = np.empty(x.shape[0], dtype=np.float64)
    for i in range(x.shape[0]):
        out[i] = math.exp(-0.5 * x[i] * x[i]) / _SQRT_TWOPI
    return out


@njit(**_JIT)
def norm_logcdf(x):
    out = np.empty(x.shape[0], dtype=np.float64)
    for i in range(x.shape[0]):
        out[i] = _log_phid(x[i])
    return out


@njit(**_JIT)
def bvnd(dh, dk, r):
    """Vectorized P(X > dh, Y > dk); 1-D float64 arrays of equal length."""
    n = dh.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = _bvnd_scalar(dh[i], dk[i], r[i])
    return out
