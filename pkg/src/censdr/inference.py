"""Influence functions, asymptotic variance, multiplier bootstrap, and bands.

The estimator's sampling error is linearized through per-observation
influence functions assembled from the exact step Hessians and
cross-Jacobians at the fitted values (unfloored: the floor is inactive at
any interior optimum, and runs where it is not are flagged). Bootstrap
draws reweight those influence values with demeaned Gaussian multipliers,
one multiplier vector per draw shared across all grid cells and coefficient
blocks, so no re-optimization is needed. Uniform bands come from the
simulated quantile of the max-t statistic over the grid.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCellError, SingularHessianError
from .likelihood import (
    SortingLayout,
    link,
    link_deriv,
    step1_loglik,
    step1_score_obs,
    step2_loglik,
    step2_score_obs,
    step3_loglik,
    step3_score_obs,
)

_VAR_FLOOR = 1e-12  # cells below this contrast variance are dropped from the sup


@dataclass
class InfluenceRecords:
    """Per-observation influence values for every coefficient block."""

    n: int
    psi_mu: dict       # s -> (n, d_z)
    psi_theta: dict    # y -> (n, d_theta)
    psi_rho: dict      # (s, y) -> (n, d_rho)
    psi_eta: dict      # (s, y) -> (n, d_z + d_z + d_theta)
    warnings: list = field(default_factory=list)


@dataclass
class BandSet:
    """Pointwise estimates, standard errors, and uniform band bounds."""

    estimate: dict
    se: dict
    lower: dict
    upper: dict
    critical_value: float
    level: float
    dropped: tuple = ()


def _solve_block(H, rows, cell):
    try:
        return -np.linalg.solve(H, rows.T).T
    except np.linalg.LinAlgError as exc:
        raise SingularHessianError(f"singular Hessian block at {cell}", cell=cell) from exc


def influence(fit, data):
    """Influence records for all fitted blocks of `fit` on `data`."""
    layout = SortingLayout(fit.r_cols, fit.r0_cols)
    grid = fit.grid
    warnings = []
    for key, diag in fit.diagnostics.items():
        if diag.floor_active:
            warnings.append(f"floor active at the optimum for cell {key}")

    psi_mu = {}
    for s in grid.s_points:
        H = step1_loglik(fit.mu[s], data, s).hessian
        rows = step1_score_obs(fit.mu[s], data, s)
        psi_mu[s] = _solve_block(H, rows, ("mu", s))

    psi_theta = {}
    for y in grid.y_points:
        res = step2_loglik(fit.theta(y), fit.mu[0.0], data, y, cfg=None, layout=layout)
        cond = np.linalg.cond(res.hessian)
        if cond > 1e8:
            warnings.append(
                f"ill-conditioned step-2 Hessian at y={y} (cond {cond:.2e}); "
                "weak or missing instrument?"
            )
        rows = step2_score_obs(fit.theta(y), fit.mu[0.0], data, y, cfg=None, layout=layout)
        rows = rows + psi_mu[0.0] @ res.cross_jacobian.T
        psi_theta[y] = _solve_block(res.hessian, rows, ("theta", y))

    psi_rho, psi_eta = {}, {}
    for cell in grid.cells():
        if cell in fit.failed:
            continue
        s, y = cell
        res = step3_loglik(fit.rho[cell], fit.eta(s, y), data, s, y, None, layout=layout)
        eta_rows = np.hstack([psi_mu[0.0], psi_mu[s], psi_theta[y]])
        j3 = np.hstack([res.j_mu0, res.j_mus, res.j_theta])
        rows = step3_score_obs(fit.rho[cell], fit.eta(s, y), data, s, y, cfg=None, layout=layout)
        rows = rows + eta_rows @ j3.T
        psi_rho[cell] = _solve_block(res.hessian, rows, cell)
        psi_eta[cell] = eta_rows
    return InfluenceRecords(
        n=data.n, psi_mu=psi_mu, psi_theta=psi_theta,
        psi_rho=psi_rho, psi_eta=psi_eta, warnings=warnings,
    )


def variance_rho(records):
    """Per-cell sampling covariance of the sorting coefficients."""
    return {cell: psi.T @ psi / records.n for cell, psi in records.psi_rho.items()}


def variance_paths(records):
    """Covariances for the mu and theta blocks (coefficient-path SEs)."""
    v_mu = {s: p.T @ p / records.n for s, p in records.psi_mu.items()}
    v_theta = {y: p.T @ p / records.n for y, p in records.psi_theta.items()}
    return v_mu, v_theta


def covariance_cross(records, cell_a, cell_b):
    """Cross-cell sampling covariance of the sorting coefficients.

    Exposed for completeness; the bootstrap carries the joint behaviour
    used for band construction, so nothing downstream consumes this.
    """
    return records.psi_rho[cell_a].T @ records.psi_rho[cell_b] / records.n


def _multipliers(n, B, seed):
    """Demeaned standard-normal multipliers, one independent substream per draw."""
    root = np.random.Philox(key=seed)
    omega = np.empty((B, n))
    for b in range(B):
        w = np.random.Generator(root.jumped(b)).standard_normal(n)
        omega[b] = w - w.mean()
    return omega


def _perturb(center, psi, omega, n):
    # one gemv per draw keeps draw b bitwise independent of the total B
    out = np.empty((omega.shape[0], psi.shape[1]))
    for b in range(omega.shape[0]):
        out[b] = center + omega[b] @ psi / n
    return out


def bootstrap_draws(fit, records, B, seed):
    """Bootstrap draws of the sorting coefficients: (s,y) -> (B, d_rho)."""
    if B < 2:
        raise ValueError("need at least B = 2 bootstrap draws")
    omega = _multipliers(records.n, B, seed)
    return {
        cell: _perturb(fit.rho[cell], psi, omega, records.n)
        for cell, psi in records.psi_rho.items()
    }


def bootstrap_path_draws(fit, records, B, seed):
    """Bootstrap draws of all coefficient paths, sharing the rho-draw multipliers.

    Returns (mu_draws, theta_draws): s -> (B, d_z) and y -> (B, d_theta).
    """
    omega = _multipliers(records.n, B, seed)
    mu_draws = {
        s: _perturb(fit.mu[s], psi, omega, records.n)
        for s, psi in records.psi_mu.items()
    }
    theta_draws = {
        y: _perturb(fit.theta(y), psi, omega, records.n)
        for y, psi in records.psi_theta.items()
    }
    return mu_draws, theta_draws


def _contrast_for(c, cell):
    if isinstance(c, dict):
        return np.asarray(c[cell], dtype=np.float64)
    return np.asarray(c, dtype=np.float64)


def max_t_critical(draws, fit, variance, c, level, cells=None, dropped=None):
    """Simulation p-quantile of the max-t statistic over the grid cells.

    Cells whose contrast variance c'Sigma c falls below 1e-12 are dropped
    from the sup (collected into the optional `dropped` list); if every
    requested cell is degenerate a DegenerateCellError is raised.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if cells is None:
        cells = sorted(draws.keys())
    n = fit.n_obs
    t_max = None
    for cell in cells:
        cv = _contrast_for(c, cell)
        denom2 = float(cv @ variance[cell] @ cv)
        if not np.isfinite(denom2) or denom2 < _VAR_FLOOR:
            # degenerate or undefined (boundary-flagged) cells leave the sup
            if dropped is not None:
                dropped.append(cell)
            continue
        dev = (draws[cell] - fit.rho[cell][None, :]) @ cv
        t_cell = np.sqrt(n) * np.abs(dev) / np.sqrt(denom2)
        t_max = t_cell if t_max is None else np.maximum(t_max, t_cell)
    if t_max is None:
        raise DegenerateCellError("all requested cells have (near-)zero variance")
    return float(np.quantile(t_max, level))


def band(fit, variance, cv, c, level):
    """Uniform confidence band for the linear functional c'rho over the grid."""
    estimate, se, lower, upper = {}, {}, {}, {}
    n = fit.n_obs
    for cell, rho in sorted(fit.rho.items()):
        cvec = _contrast_for(c, cell)
        est = float(cvec @ rho)
        s_e = float(np.sqrt(max(cvec @ variance[cell] @ cvec, 0.0) / n))
        estimate[cell] = est
        se[cell] = s_e
        lower[cell] = est - cv * s_e
        upper[cell] = est + cv * s_e
    return BandSet(estimate, se, lower, upper, critical_value=cv, level=level)


def sorting_contrasts(fit, z0):
    """Delta-method contrasts for the sorting function g(z0'rho) at covariate z0."""
    z0 = np.asarray(z0, dtype=np.float64)
    z0r = z0[list(fit.r_cols)]
    return {
        cell: float(link_deriv(z0r @ rho)) * z0r for cell, rho in fit.rho.items()
    }


def sorting_function_band(fit, records, z0, level, B, seed):
    """Uniform band for (s, y) -> g(z0'rho_sy) via the multiplier bootstrap.

    Returns (BandSet, variance) with estimates on the g scale and the
    half-width from the delta-method contrast at each cell.
    """
    var = variance_rho(records)
    draws = bootstrap_draws(fit, records, B, seed)
    contrasts = sorting_contrasts(fit, z0)
    dropped = []
    cv = max_t_critical(draws, fit, var, contrasts, level, dropped=dropped)
    z0r = np.asarray(z0, dtype=np.float64)[list(fit.r_cols)]
    bs = band(fit, var, cv, contrasts, level)
    for cell, rho in sorted(fit.rho.items()):
        bs.estimate[cell] = float(link(z0r @ rho))
        bs.lower[cell] = bs.estimate[cell] - cv * bs.se[cell]
        bs.upper[cell] = bs.estimate[cell] + cv * bs.se[cell]
    bs.dropped = tuple(dropped)
    return bs, var
