"""Univariate and bivariate standard-Gaussian primitives.

CDF, PDF, quantile, and the first/second partial derivatives of the
bivariate CDF that every likelihood in this package consumes. Arguments are
extended reals: +/-inf short-circuits to the marginal CDF or to 0/1. All
functions broadcast and accept scalars or arrays; scalar inputs return
floats.

The bivariate CDF is evaluated by the backend kernels (numba or numpy, see
`_backend`), accurate to ~5e-15 absolute for |rho| <= 0.999.
"""

import numpy as np
from scipy.special import ndtri

from ._backend import backend
from .errors import DegenerateCorrelationError, DomainError

_SQRT_TWOPI = np.sqrt(2.0 * np.pi)

# beyond this the univariate CDF is 0 or 1 to double precision
_TAIL_CUT = 37.5


def _vectorize(func):
    """Run `func` on flat float64 views of broadcast inputs."""

    def wrapper(*args):
        scalar = all(np.ndim(a) == 0 for a in args)
        bcast = np.broadcast_arrays(*[np.asarray(a, dtype=np.float64) for a in args])
        shape = bcast[0].shape
        flats = [np.ascontiguousarray(b).ravel() for b in bcast]
        out = func(*flats)
        if isinstance(out, tuple):
            if scalar:
                return tuple(float(o[0]) for o in out)
            return tuple(o.reshape(shape) for o in out)
        if scalar:
            return float(out[0])
        return out.reshape(shape)

    return wrapper


# -- univariate ---------------------------------------------------------------


@_vectorize
def std_cdf(x):
    """Standard normal CDF on the extended real line."""
    out = np.empty_like(x)
    finite = np.isfinite(x)
    out[finite] = backend().norm_cdf(np.ascontiguousarray(x[finite]))
    out[x == -np.inf] = 0.0
    out[x == np.inf] = 1.0
    out[np.isnan(x)] = np.nan
    return out


@_vectorize
def std_pdf(x):
    out = np.zeros_like(x)
    finite = np.isfinite(x)
    out[finite] = backend().norm_pdf(np.ascontiguousarray(x[finite]))
    out[np.isnan(x)] = np.nan
    return out


@_vectorize
def std_logcdf(x):
    out = np.empty_like(x)
    finite = np.isfinite(x)
    out[finite] = backend().norm_logcdf(np.ascontiguousarray(x[finite]))
    out[x == -np.inf] = -np.inf
    out[x == np.inf] = 0.0
    out[np.isnan(x)] = np.nan
    return out


def std_quantile(p):
    """Inverse of std_cdf; endpoints map to -inf/+inf."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError("std_quantile requires p in [0, 1]")
    out = ndtri(arr)
    if np.ndim(p) == 0:
        return float(out)
    return out


# -- bivariate ----------------------------------------------------------------


def _check_rho(r, strict):
    if np.any(np.isnan(r)) or np.any(np.abs(r) > 1.0):
        raise DomainError("correlation must lie in [-1, 1]")
    if strict and np.any(np.abs(r) >= 1.0):
        raise DegenerateCorrelationError("|rho| = 1 is degenerate here")


@_vectorize
def _biv_cdf_flat(a, b, r):
    out = np.empty_like(a)
    # extended-real and far-tail short circuits keep the kernel inputs finite
    lo_a = a < -_TAIL_CUT
    lo_b = b < -_TAIL_CUT
    hi_a = a > _TAIL_CUT
    hi_b = b > _TAIL_CUT
    out[lo_a | lo_b] = 0.0
    m = hi_a & ~lo_b
    if np.any(m):
        out[m] = std_cdf(np.minimum(b[m], _TAIL_CUT + 1.0))
    m = hi_b & ~lo_a & ~hi_a
    if np.any(m):
        out[m] = std_cdf(a[m])
    interior = ~(lo_a | lo_b | hi_a | hi_b)
    if np.any(interior):
        out[interior] = backend().bvnd(
            np.ascontiguousarray(-a[interior]),
            np.ascontiguousarray(-b[interior]),
            np.ascontiguousarray(r[interior]),
        )
    nan = np.isnan(a) | np.isnan(b)
    out[nan] = np.nan
    return out


def biv_cdf(a, b, rho):
    """P(A <= a, B <= b) for standard bivariate normal with correlation rho."""
    _check_rho(np.asarray(rho), strict=False)
    return _biv_cdf_flat(a, b, rho)


@_vectorize
def _biv_logcdf_flat(a, b, r):
    p = _biv_cdf_flat(a, b, r)
    out = np.full(p.shape, -np.inf)
    ok = p > 1e-280
    out[ok] = np.log(p[ok])
    tail = ~ok & np.isfinite(a) & np.isfinite(b) & (np.abs(r) < 1.0)
    if np.any(tail):
        m = np.minimum(a[tail], b[tail])
        o = np.maximum(a[tail], b[tail])
        s = np.sqrt(1.0 - r[tail] ** 2)
        out[tail] = std_logcdf(m) + std_logcdf((o - r[tail] * m) / s)
    out[np.isnan(a) | np.isnan(b)] = np.nan
    return out


def biv_logcdf(a, b, rho):
    """log biv_cdf, with a first-order tail approximation when the CDF underflows.

    For probabilities below ~1e-280 this returns
    log Phi(m) + log Phi((o - rho*m)/sqrt(1-rho^2)) with m = min(a, b),
    which is the leading term of the Laplace expansion of the tail integral.
    """
    _check_rho(np.asarray(rho), strict=False)
    return _biv_logcdf_flat(a, b, rho)


@_vectorize
def _biv_pdf_flat(a, b, r):
    out = np.zeros_like(a)
    finite = np.isfinite(a) & np.isfinite(b)
    af, bf, rf = a[finite], b[finite], r[finite]
    s2 = 1.0 - rf * rf
    q = af * af - 2.0 * rf * af * bf + bf * bf
    out[finite] = np.exp(-0.5 * q / s2) / (2.0 * np.pi * np.sqrt(s2))
    out[np.isnan(a) | np.isnan(b)] = np.nan
    return out


def biv_pdf(a, b, rho):
    """Standard bivariate normal density; requires |rho| < 1."""
    _check_rho(np.asarray(rho), strict=True)
    return _biv_pdf_flat(a, b, rho)


@_vectorize
def _biv_grad_flat(a, b, r):
    s = np.sqrt(1.0 - r * r)
    with np.errstate(invalid="ignore"):
        wa = np.where(np.isfinite(a) & np.isfinite(b), (b - r * a) / s, 0.0)
        wb = np.where(np.isfinite(a) & np.isfinite(b), (a - r * b) / s, 0.0)
    da = std_pdf(a) * np.where(b == np.inf, 1.0, np.where(b == -np.inf, 0.0, std_cdf(wa)))
    db = std_pdf(b) * np.where(a == np.inf, 1.0, np.where(a == -np.inf, 0.0, std_cdf(wb)))
    dr = _biv_pdf_flat(a, b, r)
    return da, db, dr


def biv_cdf_grad(a, b, rho):
    """Partials of biv_cdf w.r.t. (a, b, rho); d_rho equals the density."""
    _check_rho(np.asarray(rho), strict=True)
    return _biv_grad_flat(a, b, rho)


@_vectorize
def _biv_hess_rho_flat(a, b, r):
    pdf = _biv_pdf_flat(a, b, r)
    s2 = 1.0 - r * r
    fin = np.isfinite(a) & np.isfinite(b)
    az = np.where(fin, a, 0.0)
    bz = np.where(fin, b, 0.0)
    dra = -pdf * (az - r * bz) / s2
    drb = -pdf * (bz - r * az) / s2
    drr = pdf * (r * s2 - r * (az * az + bz * bz) + az * bz * (1.0 + r * r)) / (s2 * s2)
    return dra, drb, drr


def biv_cdf_hess_rho(a, b, rho):
    """Second partials (d_rho_a, d_rho_b, d_rho_rho) of biv_cdf."""
    _check_rho(np.asarray(rho), strict=True)
    return _biv_hess_rho_flat(a, b, rho)
