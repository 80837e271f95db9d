"""Local Gaussian representation utilities and identification solvers.

Any bivariate CDF evaluated at a point can be written as a standard
bivariate Gaussian CDF with a point-specific correlation; these routines
invert that representation and solve the two identification systems that an
excluded binary instrument makes available: the joint (nu, rho0) system at
the censoring level, and the one-dimensional interval equation for the
sorting parameter at higher selection levels.
"""

from dataclasses import dataclass

import numpy as np

from . import gauss2d
from .errors import (
    DegenerateMarginalError,
    InfeasibleProbabilityError,
    NonconvergenceError,
    WeakInstrumentError,
)

_RHO_BOX = 1.0 - 1e-9
_TOL = 1e-10
_MAX_ITER = 200


@dataclass(frozen=True)
class LgrPoint:
    """One point of the local Gaussian representation."""

    mu: float
    nu: float
    rho: float

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise InfeasibleProbabilityError("rho must lie in [-1, 1]")


@dataclass(frozen=True)
class ExclusionInputs:
    """Observable probabilities entering the censoring-level system.

    p_z = Pr(S > s0 | Z = z), q_z = Pr(S > s0, Y <= y | Z = z).
    """

    p0: float
    p1: float
    q0: float
    q1: float

    def __post_init__(self):
        if not (0.0 < self.p0 < self.p1 < 1.0):
            raise InfeasibleProbabilityError(
                "relevance requires 0 < p0 < p1 < 1, got "
                f"p0={self.p0}, p1={self.p1}"
            )
        for z, p, q in ((0, self.p0, self.q0), (1, self.p1, self.q1)):
            if not (0.0 <= q <= p):
                raise InfeasibleProbabilityError(
                    f"q{z}={q} outside [0, p{z}={p}]"
                )


def _frechet_bounds(f_s, f_y):
    return max(0.0, f_s + f_y - 1.0), min(f_s, f_y)


def _solve_rho_1d(mu, nu, target):
    """Unique rho with biv_cdf(mu, nu, rho) = target, by safeguarded Newton.

    The map rho -> biv_cdf is strictly increasing for finite (mu, nu); the
    derivative is the bivariate density, so Newton steps are cheap and a
    bisection bracket guards against flat tails near |rho| = 1. Iterates
    until the Newton step (not just the residual) is below tolerance, since
    a small residual pins rho only up to the local density scale.
    """
    lo, hi = -_RHO_BOX, _RHO_BOX
    f_lo = gauss2d.biv_cdf(mu, nu, lo) - target
    f_hi = gauss2d.biv_cdf(mu, nu, hi) - target
    if f_lo > 0.0 or f_hi < 0.0:
        # target sits in the sliver between the box edge and the exact bound
        return -1.0 if f_lo > 0.0 else 1.0
    rho = 0.5 * (lo + hi)
    resid = np.nan
    for _ in range(_MAX_ITER):
        resid = gauss2d.biv_cdf(mu, nu, rho) - target
        if resid == 0.0:
            return float(rho)
        if resid > 0.0:
            hi = rho
        else:
            lo = rho
        if hi - lo < 1e-15:
            break
        dens = gauss2d.biv_pdf(mu, nu, rho)
        step = resid / dens if dens > 0.0 else np.inf
        if abs(resid) <= 1e-14 and abs(step) <= 1e-12:
            return float(rho)
        cand = rho - step
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if abs(cand - rho) < 1e-16:
            rho = cand
            break
        rho = cand
    resid = gauss2d.biv_cdf(mu, nu, rho) - target
    if abs(resid) <= _TOL:
        return float(rho)
    raise NonconvergenceError(
        "rho solver exhausted its iteration budget",
        residuals=resid,
        iterate=rho,
    )


def local_correlation(f_joint, f_s, f_y):
    """Correlation rho with Phi2(qnorm(f_s), qnorm(f_y); rho) = f_joint."""
    if not (0.0 < f_s < 1.0) or not (0.0 < f_y < 1.0):
        raise DegenerateMarginalError("marginals must lie strictly inside (0, 1)")
    lo, hi = _frechet_bounds(f_s, f_y)
    if f_joint < lo - 1e-12 or f_joint > hi + 1e-12:
        raise InfeasibleProbabilityError(
            f"joint probability {f_joint} outside Frechet bounds [{lo}, {hi}]"
        )
    if f_joint <= lo:
        return -1.0
    if f_joint >= hi:
        return 1.0
    mu = gauss2d.std_quantile(f_s)
    nu = gauss2d.std_quantile(f_y)
    return _solve_rho_1d(mu, nu, f_joint)


def solve_nu_rho0(inputs):
    """Solve the censoring-level system for (nu, rho0).

    For z in {0, 1}:  q_z = Phi(nu) - Phi2(qnorm(1 - p_z), nu; rho0).
    Damped Newton with the analytic Jacobian; falls back to nested
    bisection over rho0 when a Newton step leaves the feasible box.
    """
    if abs(inputs.p1 - inputs.p0) < 1e-10:
        raise WeakInstrumentError(
            "p0 == p1: the instrument does not move the selection probability"
        )
    mu_z = (gauss2d.std_quantile(1.0 - inputs.p0), gauss2d.std_quantile(1.0 - inputs.p1))
    q = np.array([inputs.q0, inputs.q1])
    p = np.array([inputs.p0, inputs.p1])

    def resid(nu, rho0):
        return np.array(
            [
                gauss2d.std_cdf(nu) - gauss2d.biv_cdf(mu_z[z], nu, rho0) - q[z]
                for z in (0, 1)
            ]
        )

    def jac(nu, rho0):
        J = np.empty((2, 2))
        for z in (0, 1):
            da, db, dr = gauss2d.biv_cdf_grad(mu_z[z], nu, rho0)
            J[z, 0] = gauss2d.std_pdf(nu) - db
            J[z, 1] = -dr
        return J

    ratio = np.clip(0.5 * (q[0] / p[0] + q[1] / p[1]), 1e-10, 1.0 - 1e-10)
    nu = gauss2d.std_quantile(ratio)
    rho0 = 0.0
    r = resid(nu, rho0)
    for _ in range(_MAX_ITER):
        try:
            step = np.linalg.solve(jac(nu, rho0), -r)
        except np.linalg.LinAlgError:
            break
        if np.max(np.abs(r)) <= 1e-13 and np.max(np.abs(step)) <= 1e-11:
            return float(nu), float(rho0)
        lam = 1.0
        norm0 = np.linalg.norm(r)
        moved = False
        while lam > 1e-10:
            nu_new = nu + lam * step[0]
            rho_new = rho0 + lam * step[1]
            if abs(rho_new) < _RHO_BOX and abs(nu_new) < 40.0:
                r_new = resid(nu_new, rho_new)
                if np.linalg.norm(r_new) < norm0 or norm0 == 0.0:
                    nu, rho0, r = nu_new, rho_new, r_new
                    moved = True
                    break
            lam *= 0.5
        if not moved:
            if np.max(np.abs(r)) <= 1e-10:
                return float(nu), float(rho0)
            break
    nu, rho0 = _solve_nu_rho0_bisect(mu_z, q, resid)
    r = resid(nu, rho0)
    if np.max(np.abs(r)) > 1e-9:
        raise NonconvergenceError(
            "censoring-level system did not converge",
            residuals=r,
            iterate=(nu, rho0),
        )
    return float(nu), float(rho0)


def _solve_nu_rho0_bisect(mu_z, q, resid):
    """Nested bisection: solve eq(z=1) for nu given rho0, bisect rho0 on eq(z=0)."""

    def nu_given_rho(rho0):
        # q1 = Phi(nu) - Phi2(mu1, nu; rho0) is strictly increasing in nu
        lo, hi = -40.0, 40.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            v = gauss2d.std_cdf(mid) - gauss2d.biv_cdf(mu_z[1], mid, rho0)
            if v < q[1]:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        return 0.5 * (lo + hi)

    def outer(rho0):
        return resid(nu_given_rho(rho0), rho0)[0]

    lo, hi = -_RHO_BOX, _RHO_BOX
    f_lo, f_hi = outer(lo), outer(hi)
    if f_lo == 0.0:
        return nu_given_rho(lo), lo
    if f_hi == 0.0:
        return nu_given_rho(hi), hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise NonconvergenceError(
            "no sign change in the censoring-level system over the rho0 box",
            residuals=(f_lo, f_hi),
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = outer(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    rho0 = 0.5 * (lo + hi)
    return nu_given_rho(rho0), rho0


def solve_rho_s(p_interval, mu_z_s0, mu_z_s, nu, rho0):
    """Sorting parameter at s > s0 from the interval probability.

    Solves Phi2(mu_z_s, nu; rho_s) - Phi2(mu_z_s0, nu; rho0) = p_interval.
    """
    base = gauss2d.biv_cdf(mu_z_s0, nu, rho0)
    target = p_interval + base
    if p_interval < -1e-12 or target > 1.0 + 1e-12:
        raise InfeasibleProbabilityError(
            f"interval probability {p_interval} infeasible given the base cell {base}"
        )
    lo, hi = _frechet_bounds(gauss2d.std_cdf(mu_z_s), gauss2d.std_cdf(nu))
    if target < lo - 1e-12 or target > hi + 1e-12:
        raise InfeasibleProbabilityError(
            f"implied joint {target} outside Frechet bounds [{lo}, {hi}]"
        )
    if target <= lo:
        return -1.0
    if target >= hi:
        return 1.0
    return _solve_rho_1d(mu_z_s, nu, target)
