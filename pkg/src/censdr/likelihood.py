"""Log-likelihoods, analytic scores, Hessians, and cross-Jacobians.

The three estimation steps:

  step 1: probit of 1(S > s) on Z, one fit per selection level s;
  step 2: selection-corrected probit for (nu_y, rho0_y) given mu_0;
  step 3: bivariate probit cell likelihood for rho_sy given the step-1/2
          plug-ins, with a smooth probability floor keeping differenced
          cell probabilities positive during optimization.

All derivative outputs are exact sample derivatives of the returned value
(they match central finite differences at any parameter point); at the
fitted optimum they double as the Hessian/Jacobian blocks of the variance
estimator. Scores and Hessians are averages over the full sample; censored
rows enter step 2/3 only through the division by n.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import gauss2d
from .errors import DataError, EmptySelectionError

_RHO_CLAMP = 1.0 - 1e-10


# -- data ----------------------------------------------------------------------


@dataclass
class ObservationTable:
    """Observed rows (s, y, z) with the outcome present iff s > 0.

    z holds the full covariate matrix including instruments; x_cols names
    the columns of z that enter the outcome equation.
    """

    z: np.ndarray
    s: np.ndarray
    y: np.ndarray
    x_cols: tuple
    z_names: tuple = ()

    def __post_init__(self):
        self.z = np.ascontiguousarray(self.z, dtype=np.float64)
        self.s = np.ascontiguousarray(self.s, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.x_cols = tuple(int(c) for c in self.x_cols)
        if self.z.ndim != 2:
            raise DataError("z must be a 2-D matrix")
        n, d = self.z.shape
        if self.s.shape != (n,) or self.y.shape != (n,):
            raise DataError("s and y must be length-n vectors")
        if not self.z_names:
            self.z_names = tuple(f"z{j}" for j in range(d))
        if len(self.z_names) != d:
            raise DataError("z_names length must match z columns")
        if not all(0 <= c < d for c in self.x_cols):
            raise DataError("x_cols out of range")
        if not np.all(np.isfinite(self.z)):
            rows = np.where(~np.isfinite(self.z).all(axis=1))[0]
            raise DataError("non-finite covariates", rows=rows)
        if np.any(self.s < 0) or not np.all(np.isfinite(self.s)):
            rows = np.where(~(self.s >= 0))[0]
            raise DataError("selection values must be finite and nonnegative", rows=rows)
        d_i = self.s > 0
        bad = d_i & ~np.isfinite(self.y)
        if np.any(bad):
            raise DataError("outcome missing on selected rows", rows=np.where(bad)[0])
        bad = ~d_i & np.isfinite(self.y)
        if np.any(bad):
            raise DataError(
                "outcome present on censored rows (ingest should have blanked it)",
                rows=np.where(bad)[0],
            )
        for arr in (self.z, self.s, self.y):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def d_z(self):
        return self.z.shape[1]

    @property
    def d(self):
        return self.s > 0

    @property
    def x(self):
        return self.z[:, self.x_cols]


@dataclass(frozen=True)
class SortingLayout:
    """Which z-columns enter the sorting index.

    r_cols applies for s > 0 (defaults to all of z); r0_cols applies at the
    censoring level and must exclude instruments (defaults to x_cols).
    """

    r_cols: Optional[tuple] = None
    r0_cols: Optional[tuple] = None

    def resolve(self, data):
        r = tuple(self.r_cols) if self.r_cols is not None else tuple(range(data.d_z))
        r0 = tuple(self.r0_cols) if self.r0_cols is not None else data.x_cols
        if not set(r0) <= set(data.x_cols):
            raise DataError("r0_cols must be a subset of the outcome columns")
        return r, r0


@dataclass(frozen=True)
class FloorConfig:
    """Smooth probability floor: pass-through above tau, tanh asymptote eps below."""

    tau: float = 1e-5
    eps: float = None  # defaults to tau / 2

    def __post_init__(self):
        if self.eps is None:
            object.__setattr__(self, "eps", self.tau / 2.0)
        if not 0.0 < self.eps < self.tau < 0.5:
            raise ValueError("need 0 < eps < tau < 0.5")


class StepParams(NamedTuple):
    """The full parameter ensemble of one (s, y) cell."""

    mu0: np.ndarray
    mu_s: np.ndarray
    nu_y: np.ndarray
    rho0_y: np.ndarray
    rho_sy: np.ndarray

    @property
    def eta(self):
        return (self.mu0, self.mu_s, self.nu_y, self.rho0_y)


class Step1Result(NamedTuple):
    value: float
    score: np.ndarray
    hessian: np.ndarray


class Step2Result(NamedTuple):
    value: float
    score: np.ndarray
    hessian: np.ndarray
    cross_jacobian: np.ndarray  # d(score)/d(mu0'), shape (d_theta, d_z)


class Step3Result(NamedTuple):
    value: float
    score: np.ndarray
    hessian: np.ndarray
    j_mu0: np.ndarray
    j_mus: np.ndarray
    j_theta: np.ndarray
    floor_active_frac: float


# -- link and floor -------------------------------------------------------------


def link(u):
    """Fisher link g(u) = tanh(u), mapping the sorting index into (-1, 1)."""
    return np.tanh(u)


def link_deriv(u):
    g = np.tanh(u)
    return 1.0 - g * g


def link_second(u):
    g = np.tanh(u)
    return -2.0 * g * (1.0 - g * g)


# the only link that ships; step 2/3 accept any (g, g', g'') triple with
# range (-1, 1) through their link_fns argument
TANH_LINK = (link, link_deriv, link_second)


def smooth_floor(p, cfg):
    """Floored probability and its derivative: (f(p), f'(p)).

    f(p) = p for p >= tau and (tau-eps)*tanh((p-tau)/(tau-eps)) + tau below,
    continuously differentiable at tau with f(p) > eps everywhere.
    """
    v, d1, _ = _floor3(p, cfg)
    return v, d1


def _floor3(p, cfg):
    """(f, f', f'') of the smooth floor; identity when cfg is None."""
    p = np.asarray(p, dtype=np.float64)
    if cfg is None:
        return p, np.ones_like(p), np.zeros_like(p)
    scale = cfg.tau - cfg.eps
    below = p < cfg.tau
    t = np.tanh(np.where(below, (p - cfg.tau) / scale, 0.0))
    sech2 = 1.0 - t * t
    v = np.where(below, scale * t + cfg.tau, p)
    d1 = np.where(below, sech2, 1.0)
    d2 = np.where(below, -2.0 * t * sech2 / scale, 0.0)
    return v, d1, d2


def _floor_weights(p, cfg):
    """Chain-rule weights of log f(p): q1 = (log f)' and q2 = dq1/dp."""
    f, f1, f2 = _floor3(p, cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        q1 = f1 / f
        q2 = (f2 * f - f1 * f1) / (f * f)
    return f, q1, q2


def _clamp_corr(r):
    return np.clip(r, -_RHO_CLAMP, _RHO_CLAMP)


# -- step 1: probit -------------------------------------------------------------


def _step1_parts(mu, data, s):
    # evaluation is defined even for a constant indicator; the fitting layer
    # raises SeparationError before optimizing such a cell
    jbar = data.s > s
    u = data.z @ np.asarray(mu, dtype=np.float64)
    log_pos = gauss2d.std_logcdf(u)
    log_neg = gauss2d.std_logcdf(-u)
    logpdf = -0.5 * u * u - 0.5 * np.log(2.0 * np.pi)
    mills_pos = np.exp(logpdf - log_pos)   # lambda(u) = phi/Phi, tail-stable
    mills_neg = np.exp(logpdf - log_neg)   # lambda(-u)
    score_row = np.where(jbar, mills_pos, -mills_neg)
    w = np.where(
        jbar,
        -mills_pos * (u + mills_pos),
        -mills_neg * (mills_neg - u),
    )
    value = float(np.mean(np.where(jbar, log_pos, log_neg)))
    return jbar, score_row, w, value


def step1_loglik(mu, data, s):
    """Probit log-likelihood of 1(S > s) on Z with exact score and Hessian."""
    _, score_row, w, value = _step1_parts(mu, data, s)
    n = data.n
    score = data.z.T @ score_row / n
    hessian = data.z.T @ (w[:, None] * data.z) / n
    return Step1Result(value, score, hessian)


def step1_score_obs(mu, data, s):
    """Per-observation probit scores, n x d_z."""
    _, score_row, _, _ = _step1_parts(mu, data, s)
    return score_row[:, None] * data.z


# -- step 2: selection-corrected probit -----------------------------------------


def _step2_parts(theta, mu0_hat, data, y, layout=None, link_fns=None):
    sel = data.d
    if not sel.any():
        raise EmptySelectionError("no selected rows (all d = 0)")
    g, g1, g2 = link_fns or TANH_LINK
    _, r0_cols = (layout or SortingLayout()).resolve(data)
    zs = data.z[sel]
    xs = data.x[sel]
    x0 = data.z[sel][:, r0_cols]
    d_x = xs.shape[1]
    theta = np.asarray(theta, dtype=np.float64)
    nu, rho0 = theta[:d_x], theta[d_x:]
    ind = data.y[sel] <= y

    u0 = zs @ np.asarray(mu0_hat, dtype=np.float64)
    v = xs @ nu
    c0 = x0 @ rho0
    r = _clamp_corr(g(c0))
    gd = g1(c0)
    gdd = g2(c0)

    p_a = gauss2d.biv_cdf(u0, v, r)        # P(S>0, Y>y | Z)
    p_b = gauss2d.biv_cdf(u0, -v, -r)      # P(S>0, Y<=y | Z)
    pa, pb, pdf = gauss2d.biv_cdf_grad(u0, v, r)
    pbb = -v * pb - r * pdf                # d2 Phi2 / db2
    dpdf_da, dpdf_db, dpdf_dr = gauss2d.biv_cdf_hess_rho(u0, v, r)
    phi_u0 = gauss2d.std_pdf(u0)

    sg = np.where(ind, -1.0, 1.0)          # active cell: B when I^y, else A
    return dict(
        zs=zs, xs=xs, x0=x0, ind=ind, sg=sg,
        p_cell=np.where(ind, p_b, p_a),
        dv=sg * pb,
        dr=sg * pdf,
        du=np.where(ind, phi_u0 - pa, pa),
        dvv=sg * pbb,
        dvr=sg * dpdf_db,
        drr=sg * dpdf_dr,
        dvu=sg * pdf,
        dru=sg * dpdf_da,
        gd=gd, gdd=gdd, d_x=d_x, sel=sel,
    )


def step2_loglik(theta, mu0_hat, data, y, cfg=FloorConfig(), layout=None,
                 link_fns=None):
    """Selection-corrected probit for theta = (nu_y, rho0_y) given mu0_hat.

    Returns the floored log-likelihood, its exact score and Hessian in
    theta, and the cross-Jacobian of the score with respect to mu0.
    """
    p = _step2_parts(theta, mu0_hat, data, y, layout, link_fns)
    n = data.n
    f, q1, q2 = _floor_weights(p["p_cell"], cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = np.log(f)
    value = float(np.sum(logf) / n) if np.all(f > 0) else -np.inf

    xs, x0, zs = p["xs"], p["x0"], p["zs"]
    gd, gdd = p["gd"], p["gdd"]
    dv, dr, du = p["dv"], p["dr"], p["du"]

    s_nu = xs.T @ (q1 * dv) / n
    s_r0 = x0.T @ (q1 * dr * gd) / n
    score = np.concatenate([s_nu, s_r0])

    w_vv = q2 * dv * dv + q1 * p["dvv"]
    w_vr = q2 * dv * dr * gd + q1 * p["dvr"] * gd
    w_rr = q2 * (dr * gd) ** 2 + q1 * (p["drr"] * gd * gd + dr * gdd)
    h_nn = xs.T @ (w_vv[:, None] * xs) / n
    h_nr = xs.T @ (w_vr[:, None] * x0) / n
    h_rr = x0.T @ (w_rr[:, None] * x0) / n
    hessian = np.block([[h_nn, h_nr], [h_nr.T, h_rr]])

    w_vu = q2 * dv * du + q1 * p["dvu"]
    w_ru = q2 * dr * gd * du + q1 * p["dru"] * gd
    j_nu = xs.T @ (w_vu[:, None] * zs) / n
    j_r0 = x0.T @ (w_ru[:, None] * zs) / n
    cross = np.vstack([j_nu, j_r0])
    return Step2Result(value, score, hessian, cross)


def step2_score_obs(theta, mu0_hat, data, y, cfg=None, layout=None, link_fns=None):
    """Per-observation step-2 scores, n x d_theta (zero rows when d = 0)."""
    p = _step2_parts(theta, mu0_hat, data, y, layout, link_fns)
    _, q1, _ = _floor_weights(p["p_cell"], cfg)
    out = np.zeros((data.n, p["d_x"] + p["x0"].shape[1]))
    out[p["sel"], : p["d_x"]] = (q1 * p["dv"])[:, None] * p["xs"]
    out[p["sel"], p["d_x"]:] = (q1 * p["dr"] * p["gd"])[:, None] * p["x0"]
    return out


# -- step 3: bivariate probit cells ----------------------------------------------


def _step3_parts(rho, eta_hat, data, s, y, layout=None, link_fns=None):
    if s <= 0:
        raise ValueError("step 3 applies to selection levels s > 0")
    sel = data.d
    if not sel.any():
        raise EmptySelectionError("no selected rows (all d = 0)")
    g, g1, g2 = link_fns or TANH_LINK
    r_cols, r0_cols = (layout or SortingLayout()).resolve(data)
    mu0, mu_s, nu, rho0 = (np.asarray(a, dtype=np.float64) for a in eta_hat)

    zs = data.z[sel]
    xs = data.x[sel]
    zr = data.z[sel][:, r_cols]
    x0 = data.z[sel][:, r0_cols]
    jj = data.s[sel] <= s          # J^s on selected rows
    ii = data.y[sel] <= y          # I^y

    u0 = zs @ mu0
    us = zs @ mu_s
    v = xs @ nu
    c0 = x0 @ rho0
    r0 = _clamp_corr(g(c0))
    gd0 = g1(c0)
    t = zr @ np.asarray(rho, dtype=np.float64)
    r = _clamp_corr(g(t))
    gd = g1(t)
    gdd = g2(t)

    p1 = gauss2d.biv_cdf(us, v, r)          # P(S>s, Y>y)
    p2 = gauss2d.biv_cdf(us, -v, -r)        # P(S>s, Y<=y)
    q1c = gauss2d.biv_cdf(u0, v, r0)        # P(S>0, Y>y)
    q2c = gauss2d.biv_cdf(u0, -v, -r0)      # P(S>0, Y<=y)
    cells = np.where(
        ~jj & ~ii, p1,
        np.where(~jj & ii, p2, np.where(jj & ~ii, q1c - p1, q2c - p2)),
    )
    # cell sign of dA/dt: (+, -, -, +) over (JbarIbar, JbarI, JIbar, JI)
    sg = np.where(jj == ii, 1.0, -1.0)

    pa_s, pb_s, pdf_s = gauss2d.biv_cdf_grad(us, v, r)
    da2, db2, dr2 = gauss2d.biv_cdf_hess_rho(us, v, r)
    qa, qb, qpdf = gauss2d.biv_cdf_grad(u0, v, r0)
    phi_us = gauss2d.std_pdf(us)
    phi_u0 = gauss2d.std_pdf(u0)

    d_t = sg * pdf_s * gd
    d_tt = sg * (dr2 * gd * gd + pdf_s * gdd)
    d_us = np.where(
        ~jj & ~ii, pa_s,
        np.where(~jj & ii, phi_us - pa_s, np.where(jj & ~ii, -pa_s, pa_s - phi_us)),
    )
    d_u0 = np.where(jj & ~ii, qa, np.where(jj & ii, phi_u0 - qa, 0.0))
    d_v = np.where(
        ~jj & ~ii, pb_s,
        np.where(~jj & ii, -pb_s, np.where(jj & ~ii, qb - pb_s, pb_s - qb)),
    )
    d_c0 = np.where(jj & ~ii, qpdf * gd0, np.where(jj & ii, -qpdf * gd0, 0.0))
    dt_dus = sg * da2 * gd
    dt_dv = sg * db2 * gd
    return dict(
        zs=zs, xs=xs, zr=zr, x0=x0, sel=sel, jj=jj, ii=ii,
        cells=cells, d_t=d_t, d_tt=d_tt, d_us=d_us, d_u0=d_u0,
        d_v=d_v, d_c0=d_c0, dt_dus=dt_dus, dt_dv=dt_dv,
        d_r=zr.shape[1],
    )


def step3_loglik(rho, eta_hat, data, s, y, cfg, layout=None, link_fns=None):
    """Four-cell bivariate-probit log-likelihood for rho_sy, floored.

    eta_hat = (mu0, mu_s, nu_y, rho0_y) are the step-1/2 plug-ins. Returns
    exact score/Hessian in rho and cross-Jacobians against each plug-in
    block; floor_active_frac is the share of selected rows whose active
    cell probability fell below cfg.tau (0.0 when cfg is None).
    """
    p = _step3_parts(rho, eta_hat, data, s, y, layout, link_fns)
    n = data.n
    f, q1, q2 = _floor_weights(p["cells"], cfg)
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = np.log(f)
    value = float(np.sum(logf) / n) if np.all(f > 0) else -np.inf

    zr, zs, xs, x0 = p["zr"], p["zs"], p["xs"], p["x0"]
    d_t, d_tt = p["d_t"], p["d_tt"]

    score = zr.T @ (q1 * d_t) / n
    hessian = zr.T @ ((q2 * d_t * d_t + q1 * d_tt)[:, None] * zr) / n
    j_mu0 = zr.T @ ((q2 * d_t * p["d_u0"])[:, None] * zs) / n
    j_mus = zr.T @ ((q2 * d_t * p["d_us"] + q1 * p["dt_dus"])[:, None] * zs) / n
    j_nu = zr.T @ ((q2 * d_t * p["d_v"] + q1 * p["dt_dv"])[:, None] * xs) / n
    j_rho0 = zr.T @ ((q2 * d_t * p["d_c0"])[:, None] * x0) / n
    j_theta = np.hstack([j_nu, j_rho0])

    if cfg is None:
        floor_frac = 0.0
    else:
        floor_frac = float(np.mean(p["cells"] < cfg.tau))
    return Step3Result(value, score, hessian, j_mu0, j_mus, j_theta, floor_frac)


def step3_score_obs(rho, eta_hat, data, s, y, cfg=None, layout=None, link_fns=None):
    """Per-observation step-3 scores, n x d_rho (zero rows when d = 0)."""
    p = _step3_parts(rho, eta_hat, data, s, y, layout, link_fns)
    _, q1, _ = _floor_weights(p["cells"], cfg)
    out = np.zeros((data.n, p["d_r"]))
    out[p["sel"]] = (q1 * p["d_t"])[:, None] * p["zr"]
    return out


def cell_probability_identity(rho, eta_hat, data, s, y, layout=None):
    """A1 + A2 + A3 + A4 - Phi(z'mu0) per selected row (zero in exact arithmetic)."""
    cells = _step3_all_cells(rho, eta_hat, data, s, y, layout)
    u0 = data.z[data.d] @ np.asarray(eta_hat[0], dtype=np.float64)
    return cells.sum(axis=1) - gauss2d.std_cdf(u0)


def _step3_all_cells(rho, eta_hat, data, s, y, layout=None):
    """The four cell probabilities (columns) for every selected row."""
    sel = data.d
    r_cols, r0_cols = (layout or SortingLayout()).resolve(data)
    mu0, mu_s, nu, rho0 = (np.asarray(a, dtype=np.float64) for a in eta_hat)
    zs = data.z[sel]
    xs = data.x[sel]
    zr = data.z[sel][:, r_cols]
    x0 = data.z[sel][:, r0_cols]
    u0 = zs @ mu0
    us = zs @ mu_s
    v = xs @ nu
    r0 = _clamp_corr(link(x0 @ rho0))
    r = _clamp_corr(link(zr @ np.asarray(rho, dtype=np.float64)))
    p1 = gauss2d.biv_cdf(us, v, r)
    p2 = gauss2d.biv_cdf(us, -v, -r)
    q1c = gauss2d.biv_cdf(u0, v, r0)
    q2c = gauss2d.biv_cdf(u0, -v, -r0)
    return np.column_stack([p1, p2, q1c - p1, q2c - p2])
