"""Three-step estimation of the censored-selection distribution regression.

Step 1 fits probits for the selection marginal at every grid level, step 2
the selection-corrected outcome/censoring-sorting coefficients at every
outcome level, and step 3 the sorting coefficients at every interior
(s, y) cell, plugging in the earlier steps. Cells are independent given
the plug-ins, so step-3 cells may be fitted by worker threads; results are
keyed by cell and identical for any worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from . import gauss2d
from .errors import BadStartError, CellFitError, SeparationError
from .likelihood import (
    FloorConfig,
    SortingLayout,
    step1_loglik,
    step2_loglik,
    step3_loglik,
)

GRAD_TOL = 1e-9        # Newton polish target
ACCEPT_TOL = 1e-6      # convergence contract on the gradient norm


@dataclass(frozen=True)
class GridSpec:
    """Finite (s, y) grids; s_points must start at the censoring level 0."""

    s_points: tuple
    y_points: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in self.s_points)
        y = tuple(float(v) for v in self.y_points)
        object.__setattr__(self, "s_points", s)
        object.__setattr__(self, "y_points", y)
        if not s or s[0] != 0.0:
            raise ValueError("s_points must start at the censoring level 0")
        if any(b <= a for a, b in zip(s, s[1:])) or any(b <= a for a, b in zip(y, y[1:])):
            raise ValueError("grid points must be strictly ascending")

    @classmethod
    def from_quantiles(cls, data, s_points, y_quantile_indices):
        """y grid at sample quantiles of the observed (selected) outcome."""
        ysel = data.y[data.d]
        y = np.quantile(ysel, np.asarray(y_quantile_indices, dtype=float))
        return cls(tuple(s_points), tuple(np.unique(y)))

    @property
    def interior_s(self):
        return self.s_points[1:]

    def cells(self):
        return [(s, y) for s in self.interior_s for y in self.y_points]


@dataclass
class CellDiagnostics:
    converged: bool
    iterations: int
    grad_norm: float
    floor_active: bool = False
    message: str = ""


@dataclass
class MaximizeReport:
    converged: bool
    iterations: int
    grad_norm: float
    message: str = ""


@dataclass
class CoefficientPaths:
    """Fitted coefficient functions over the grid, plus per-cell diagnostics."""

    grid: GridSpec
    x_cols: tuple
    r_cols: tuple
    r0_cols: tuple
    mu: dict = field(default_factory=dict)     # s -> (d_z,)
    nu: dict = field(default_factory=dict)     # y -> (d_x,)
    rho0: dict = field(default_factory=dict)   # y -> (d_r0,)
    rho: dict = field(default_factory=dict)    # (s, y) -> (d_r,)
    diagnostics: dict = field(default_factory=dict)
    failed: set = field(default_factory=set)
    warnings: list = field(default_factory=list)
    floor: Optional[FloorConfig] = None
    n_obs: int = 0

    def theta(self, y):
        return np.concatenate([self.nu[y], self.rho0[y]])

    def eta(self, s, y):
        return (self.mu[0.0], self.mu[s], self.nu[y], self.rho0[y])


def maximize(fun_grad, start, hess=None, max_iter=200):
    """Maximize a smooth objective returning (value, gradient).

    Safeguarded Newton with backtracking when an analytic Hessian is
    supplied (ridge-modified if not negative definite), with an L-BFGS-B
    restart if Newton stalls. Succeeds when the gradient 2-norm falls
    below 1e-6; the polish target is 1e-9 so influence-function column
    means vanish to numerical precision.
    """
    x = np.asarray(start, dtype=np.float64).copy()
    val, grad = fun_grad(x)
    if not np.isfinite(val) or not np.all(np.isfinite(grad)):
        raise BadStartError("objective or gradient not finite at the start value")

    iters = 0

    def newton(x, budget):
        nonlocal iters
        val, grad = fun_grad(x)
        for _ in range(budget):
            gn = np.linalg.norm(grad)
            if gn <= GRAD_TOL:
                return x, grad, True
            H = hess(x)
            d = _ascent_direction(H, grad)
            # mild trust region: huge steps only occur on likelihood plateaus
            dn = np.linalg.norm(d)
            if dn > 5.0:
                d = d * (5.0 / dn)
            step = 1.0
            moved = False
            gd = grad @ d
            while step > 1e-12:
                cand = x + step * d
                v_new, g_new = fun_grad(cand)
                if np.isfinite(v_new) and v_new >= val + 1e-4 * step * gd - 1e-14:
                    x, val, grad = cand, v_new, g_new
                    moved = True
                    break
                step *= 0.5
            iters += 1
            if not moved:
                return x, grad, np.linalg.norm(grad) <= GRAD_TOL
        return x, grad, np.linalg.norm(grad) <= GRAD_TOL

    if hess is not None:
        x, grad, ok = newton(x, max_iter)
        if not ok:
            x = _lbfgs(fun_grad, x, max_iter)
            x, grad, ok = newton(x, max_iter // 2)
    else:
        x = _lbfgs(fun_grad, x, max_iter)
        _, grad = fun_grad(x)

    gn = float(np.linalg.norm(grad))
    report = MaximizeReport(
        converged=gn <= ACCEPT_TOL,
        iterations=iters,
        grad_norm=gn,
        message="" if gn <= ACCEPT_TOL else "gradient norm above tolerance",
    )
    return x, report


def _ascent_direction(H, grad):
    """Solve -H d = grad with a ridge when -H is not positive definite."""
    d = H.shape[0]
    eye = np.eye(d)
    ridge = 0.0
    scale = max(1.0, float(np.max(np.abs(H))))
    for _ in range(60):
        try:
            L = np.linalg.cholesky(-H + ridge * eye)
            break
        except np.linalg.LinAlgError:
            ridge = max(4.0 * ridge, 1e-10 * scale)
    else:
        return grad / scale
    w = np.linalg.solve(L, grad)
    return np.linalg.solve(L.T, w)


def _lbfgs(fun_grad, x, max_iter):
    def neg(v):
        val, grad = fun_grad(v)
        if not np.isfinite(val):
            return np.inf, np.zeros_like(grad)
        return -val, -grad

    res = scipy.optimize.minimize(
        neg, x, jac=True, method="L-BFGS-B",
        options=dict(maxiter=max_iter, ftol=1e-16, gtol=1e-12),
    )
    return res.x


def probit(ind, X):
    """Plain probit MLE of a binary indicator on X; used for warm starts."""
    ind = np.asarray(ind, dtype=bool)
    if ind.all() or not ind.any():
        raise SeparationError("probit indicator is constant")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]

    def fg(beta):
        u = X @ beta
        log_pos = gauss2d.std_logcdf(u)
        log_neg = gauss2d.std_logcdf(-u)
        logpdf = -0.5 * u * u - 0.5 * np.log(2.0 * np.pi)
        mills_pos = np.exp(logpdf - log_pos)
        mills_neg = np.exp(logpdf - log_neg)
        row = np.where(ind, mills_pos, -mills_neg)
        val = float(np.mean(np.where(ind, log_pos, log_neg)))
        return val, X.T @ row / n

    def hs(beta):
        u = X @ beta
        log_pos = gauss2d.std_logcdf(u)
        log_neg = gauss2d.std_logcdf(-u)
        logpdf = -0.5 * u * u - 0.5 * np.log(2.0 * np.pi)
        mills_pos = np.exp(logpdf - log_pos)
        mills_neg = np.exp(logpdf - log_neg)
        w = np.where(ind, -mills_pos * (u + mills_pos), -mills_neg * (mills_neg - u))
        return X.T @ (w[:, None] * X) / n

    beta, report = maximize(fg, np.zeros(X.shape[1]), hess=hs)
    return beta, report


def fit(data, grid, layout=None, floor=FloorConfig(), workers=1):
    """Run the three estimation steps over the grid.

    Step-1/2 failures abort with the offending cell; step-3 failures are
    recorded in `failed` and the remaining cells are still fitted.
    """
    layout = layout or SortingLayout()
    r_cols, r0_cols = layout.resolve(data)
    if not data.d.any() or data.d.all():
        raise CellFitError("need both censored and selected rows", step=1, cell=0.0)
    ysel = data.y[data.d]
    if grid.y_points and (grid.y_points[0] < ysel.min() or grid.y_points[-1] > ysel.max()):
        raise ValueError("y grid extends outside the observed selected-outcome support")
    paths = CoefficientPaths(
        grid=grid, x_cols=data.x_cols, r_cols=r_cols, r0_cols=r0_cols,
        floor=floor, n_obs=data.n,
    )
    d_z = data.d_z

    # -- step 1: selection marginals
    for s in grid.s_points:
        jbar = data.s > s
        if jbar.all() or not jbar.any():
            raise CellFitError(
                f"step 1 failed at s={s}: indicator 1(S <= s) is constant",
                step=1, cell=s,
            )

        def fg(mu, s=s):
            r = step1_loglik(mu, data, s)
            return r.value, r.score

        def hs(mu, s=s):
            return step1_loglik(mu, data, s).hessian

        try:
            mu_hat, report = maximize(fg, np.zeros(d_z), hess=hs)
        except (SeparationError, BadStartError) as exc:
            raise CellFitError(f"step 1 failed at s={s}: {exc}", step=1, cell=s) from exc
        paths.diagnostics[("mu", s)] = CellDiagnostics(
            report.converged, report.iterations, report.grad_norm, message=report.message
        )
        if not report.converged:
            raise CellFitError(
                f"step 1 did not converge at s={s} (|g|={report.grad_norm:.2e})",
                step=1, cell=s,
            )
        paths.mu[s] = mu_hat

    _check_monotone_marginal(data, paths)

    # -- step 2: outcome marginal and censoring-level sorting
    mu0_hat = paths.mu[0.0]
    sel = data.d
    x_sel = data.x[sel]
    for y in grid.y_points:
        try:
            nu_start, _ = probit(~(data.y[sel] <= y), x_sel)
        except SeparationError as exc:
            raise CellFitError(f"step 2 failed at y={y}: {exc}", step=2, cell=y) from exc
        start = np.concatenate([nu_start, np.zeros(len(r0_cols))])

        def fg(theta, y=y):
            r = step2_loglik(theta, mu0_hat, data, y, cfg=floor, layout=layout)
            return r.value, r.score

        def hs(theta, y=y):
            return step2_loglik(theta, mu0_hat, data, y, cfg=floor, layout=layout).hessian

        try:
            theta_hat, report = maximize(fg, start, hess=hs)
        except BadStartError as exc:
            raise CellFitError(f"step 2 failed at y={y}: {exc}", step=2, cell=y) from exc
        paths.diagnostics[("theta", y)] = CellDiagnostics(
            report.converged, report.iterations, report.grad_norm, message=report.message
        )
        if not report.converged:
            raise CellFitError(
                f"step 2 did not converge at y={y} (|g|={report.grad_norm:.2e})",
                step=2, cell=y,
            )
        d_x = x_sel.shape[1]
        paths.nu[y] = theta_hat[:d_x]
        paths.rho0[y] = theta_hat[d_x:]

    # -- step 3: sorting surface, cells independent given the plug-ins
    embed = _embedding(r_cols, r0_cols)

    def fit_cell(cell):
        s, y = cell
        eta = paths.eta(s, y)
        start = embed @ paths.rho0[y]

        def fg(rho):
            r = step3_loglik(rho, eta, data, s, y, floor, layout=layout)
            return r.value, r.score

        def hs(rho):
            return step3_loglik(rho, eta, data, s, y, floor, layout=layout).hessian

        try:
            rho_hat, report = maximize(fg, start, hess=hs)
        except BadStartError as exc:
            return cell, None, CellDiagnostics(False, 0, np.inf, message=str(exc))
        res = step3_loglik(rho_hat, eta, data, s, y, floor, layout=layout)
        diag = CellDiagnostics(
            report.converged, report.iterations, report.grad_norm,
            floor_active=res.floor_active_frac > 0.0, message=report.message,
        )
        return cell, (rho_hat if report.converged else None), diag

    cells = grid.cells()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit_cell, cells))
    else:
        results = [fit_cell(c) for c in cells]
    for cell, rho_hat, diag in results:
        paths.diagnostics[("rho", cell)] = diag
        if rho_hat is None:
            paths.failed.add(cell)
        else:
            paths.rho[cell] = rho_hat
    return paths


def _embedding(r_cols, r0_cols):
    """Map rho0 coefficients into the s>0 sorting layout (zeros elsewhere)."""
    E = np.zeros((len(r_cols), len(r0_cols)))
    for i, c in enumerate(r_cols):
        if c in r0_cols:
            E[i, r0_cols.index(c)] = 1.0
    return E


def _check_monotone_marginal(data, paths):
    fs = [float(np.mean(gauss2d.std_cdf(-(data.z @ paths.mu[s])))) for s in paths.grid.s_points]
    if any(b < a - 1e-12 for a, b in zip(fs, fs[1:])):
        paths.warnings.append(
            "estimated selection marginal is not monotone across s grid points"
        )
