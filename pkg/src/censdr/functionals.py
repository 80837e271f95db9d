"""Distribution functionals, the generalized quantile, and decompositions.

Plug-in functionals of fitted coefficient paths averaged over a group's
empirical covariate distribution: latent marginals, the joint CDF, observed
outcome distributions by selection stratum, and the counterfactuals that
mix coefficient blocks and covariates from different groups. Quantiles of
estimated (possibly non-monotone) CDFs are taken through a monotone
rearrangement followed by the left inverse on the grid.
"""

import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np

from . import gauss2d
from .errors import DomainError, EmptyStratumError, OffGridError
from .estimator import CoefficientPaths
from .inference import bootstrap_path_draws, bootstrap_draws, variance_rho
from .likelihood import link


@dataclass
class GroupInputs:
    """Fitted paths plus the covariate rows of one population group."""

    paths: CoefficientPaths
    data: object  # ObservationTable supplying the empirical F_Z

    @property
    def z(self):
        return self.data.z

    @property
    def x(self):
        return self.data.z[:, self.paths.x_cols]


@dataclass
class DecompositionTable:
    """Four-way quantile decomposition; components sum to the total."""

    taus: np.ndarray
    total: np.ndarray
    wage_structure: np.ndarray
    selection_sorting: np.ndarray
    selection_structure: np.ndarray
    composition: np.ndarray


@dataclass
class HoursDecomposition:
    """Two-way CDF decomposition of the selection distribution."""

    s_points: np.ndarray
    total: np.ndarray
    structure: np.ndarray
    composition: np.ndarray


def _require(mapping, key, what):
    if key not in mapping:
        raise OffGridError(f"{what} = {key} is not on the fitted grid")
    return mapping[key]


def marginal_cdf_outcome(group, y):
    """F_Y*(y): average of Phi(-x'nu_y) over the group's covariates."""
    nu = _require(group.paths.nu, y, "y")
    return float(np.mean(gauss2d.std_cdf(-(group.x @ nu))))


def marginal_cdf_selection(group, s):
    """F_S*(s): average of Phi(-z'mu_s) over the group's covariates."""
    if s == np.inf:
        return 1.0
    mu = _require(group.paths.mu, s, "s")
    return float(np.mean(gauss2d.std_cdf(-(group.z @ mu))))


def _joint_rows(paths, z, x, s, y):
    """Phi2(-z'mu_s, -x'nu_y; g(.)) row by row; s = 0 uses the r0 layout."""
    mu = _require(paths.mu, s, "s")
    nu = _require(paths.nu, y, "y")
    if s == 0.0:
        rho0 = _require(paths.rho0, y, "y")
        corr = link(z[:, paths.r0_cols] @ rho0)
    else:
        rho = _require(paths.rho, (s, y), "(s, y)")
        corr = link(z[:, paths.r_cols] @ rho)
    return gauss2d.biv_cdf(-(z @ mu), -(x @ nu), corr)


def joint_cdf(group, s, y):
    """F_{S*,Y*}(s, y) averaged over the group's covariates."""
    if s == np.inf:
        return marginal_cdf_outcome(group, y)
    val = float(np.mean(_joint_rows(group.paths, group.z, group.x, s, y)))
    f_s = marginal_cdf_selection(group, s)
    f_y = marginal_cdf_outcome(group, y)
    if val > min(f_s, f_y) + 1e-8:
        _warnings.warn(
            f"joint CDF exceeds a marginal at (s={s}, y={y}); estimation noise",
            RuntimeWarning,
        )
    return val


def conditional_cdf_by_interval(group, s_lo, s_hi, y):
    """F_Y(y | s_lo < S* <= s_hi), the observed-outcome CDF by stratum."""
    num = joint_cdf(group, s_hi, y) - joint_cdf(group, s_lo, y)
    den = marginal_cdf_selection(group, s_hi) - marginal_cdf_selection(group, s_lo)
    if den <= 1e-10:
        raise EmptyStratumError(f"stratum ({s_lo}, {s_hi}] has probability {den}")
    if num < 0.0:
        _warnings.warn(
            f"negative stratum numerator at y={y}; clipped to 0", RuntimeWarning
        )
        num = 0.0
    return float(num / den)


def counterfactual_cdf(t, j, r, k, s_lo, s_hi, y):
    """Counterfactual observed-outcome CDF mixing groups.

    Outcome coefficients from group t, sorting from j, selection from r,
    covariate rows from k. Equals conditional_cdf_by_interval when all four
    coincide.
    """
    z, x = k.z, k.x

    def joint(s):
        if s == np.inf:
            return gauss2d.std_cdf(-(x @ _require(t.paths.nu, y, "y")))
        mu = _require(r.paths.mu, s, "s")
        nu = _require(t.paths.nu, y, "y")
        if s == 0.0:
            rho0 = _require(j.paths.rho0, y, "y")
            corr = link(z[:, j.paths.r0_cols] @ rho0)
        else:
            rho = _require(j.paths.rho, (s, y), "(s, y)")
            corr = link(z[:, j.paths.r_cols] @ rho)
        return gauss2d.biv_cdf(-(z @ mu), -(x @ nu), corr)

    def marg(s):
        if s == np.inf:
            return np.ones(z.shape[0])
        return gauss2d.std_cdf(-(z @ _require(r.paths.mu, s, "s")))

    num = float(np.mean(joint(s_hi) - joint(s_lo)))
    den = float(np.mean(marg(s_hi) - marg(s_lo)))
    if den <= 1e-10:
        raise EmptyStratumError(f"stratum ({s_lo}, {s_hi}] has probability {den}")
    if num < 0.0:
        _warnings.warn(
            f"negative counterfactual numerator at y={y}; clipped to 0", RuntimeWarning
        )
        num = 0.0
    return num / den


def generalized_quantile(F, tau):
    """Grid-discretized generalized inverse after monotone rearrangement.

    F is either a {y: probability} mapping or a (y_grid, values) pair. The
    values are sorted (rearranged) over the same ascending grid and the left
    inverse is taken with linear interpolation; taus outside the range of F
    clamp to the grid ends.
    """
    if not 0.0 < tau < 1.0:
        raise DomainError("tau must lie in (0, 1)")
    if isinstance(F, dict):
        ys = np.array(sorted(F.keys()), dtype=np.float64)
        vals = np.array([F[y] for y in ys], dtype=np.float64)
    else:
        ys, vals = (np.asarray(a, dtype=np.float64) for a in F)
    v = np.sort(vals)
    idx = int(np.searchsorted(v, tau, side="left"))
    if idx == 0:
        return float(ys[0])
    if idx == len(v):
        return float(ys[-1])
    w = (tau - v[idx - 1]) / (v[idx] - v[idx - 1])
    return float(ys[idx - 1] + w * (ys[idx] - ys[idx - 1]))


def _counterfactual_curve(t, j, r, k, s_lo, s_hi):
    ys = t.paths.grid.y_points
    return ys, np.array([counterfactual_cdf(t, j, r, k, s_lo, s_hi, y) for y in ys])


_INDEX_LABEL = {
    "t": "wage_structure",
    "j": "selection_sorting",
    "r": "selection_structure",
    "k": "composition",
}


def wage_decomposition(group1, group0, s_lo, s_hi, taus, order=("t", "j", "r", "k")):
    """Four-way decomposition of the observed-outcome quantile gap.

    Telescopes the (t, j, r, k) indices from <1,1,1,1> down to <0,0,0,0>;
    by default the outcome coefficients are peeled first, then sorting,
    then selection coefficients, then covariate composition. The extraction
    order matters for the component values (never for the total), so other
    permutations of "tjrk" can be requested via `order`.
    """
    taus = np.asarray(taus, dtype=np.float64)
    if sorted(order) != ["j", "k", "r", "t"]:
        raise ValueError("order must be a permutation of ('t', 'j', 'r', 'k')")
    state = {"t": group1, "j": group1, "r": group1, "k": group1}
    specs = [tuple(state[i] for i in "tjrk")]
    for idx in order:
        state[idx] = group0
        specs.append(tuple(state[i] for i in "tjrk"))
    curves = [_counterfactual_curve(*g, s_lo, s_hi) for g in specs]
    q = np.array([[generalized_quantile(c, tau) for tau in taus] for c in curves])
    components = {
        _INDEX_LABEL[idx]: q[step] - q[step + 1] for step, idx in enumerate(order)
    }
    return DecompositionTable(taus=taus, total=q[0] - q[-1], **components)


def hours_decomposition(group1, group0, s_points=None):
    """Two-way decomposition of the selection-distribution gap F0 - F1."""
    if s_points is None:
        s_points = group1.paths.grid.s_points
    s_points = np.asarray(s_points, dtype=np.float64)

    def f(r, k):
        return np.array(
            [np.mean(gauss2d.std_cdf(-(k.z @ _require(r.paths.mu, s, "s")))) for s in s_points]
        )

    f00 = f(group0, group0)
    f10 = f(group1, group0)
    f11 = f(group1, group1)
    return HoursDecomposition(
        s_points=s_points,
        total=f00 - f11,
        structure=f00 - f10,
        composition=f10 - f11,
    )


# -- bootstrap of the plug-in pipeline --------------------------------------------


def _paths_with(base, mu, nu, rho0, rho):
    p = CoefficientPaths(
        grid=base.grid, x_cols=base.x_cols, r_cols=base.r_cols,
        r0_cols=base.r0_cols, n_obs=base.n_obs,
    )
    p.mu, p.nu, p.rho0, p.rho = mu, nu, rho0, rho
    return p


def _group_draws(group, records, B, seed):
    """Per-draw CoefficientPaths for one group, reusing the rho multipliers."""
    fit = group.paths
    mu_d, theta_d = bootstrap_path_draws(fit, records, B, seed)
    rho_d = bootstrap_draws(fit, records, B, seed)
    d_x = len(fit.x_cols)
    out = []
    for b in range(B):
        mu = {s: mu_d[s][b] for s in mu_d}
        nu = {y: theta_d[y][b][:d_x] for y in theta_d}
        rho0 = {y: theta_d[y][b][d_x:] for y in theta_d}
        rho = {cell: rho_d[cell][b] for cell in rho_d}
        out.append(GroupInputs(_paths_with(fit, mu, nu, rho0, rho), group.data))
    return out


def wage_decomposition_bootstrap(group1, group0, records1, records0,
                                 s_lo, s_hi, taus, B, seed, level=0.95):
    """Pointwise percentile bounds for every decomposition component.

    Re-evaluates the plug-in decomposition at multiplier-bootstrap draws of
    all coefficient paths (no re-optimization); the two groups use
    independent multiplier streams derived from `seed`.
    """
    g1 = _group_draws(group1, records1, B, seed)
    g0 = _group_draws(group0, records0, B, seed + 1)
    comps = {k: [] for k in ("total", "wage_structure", "selection_sorting",
                             "selection_structure", "composition")}
    for b in range(B):
        tab = wage_decomposition(g1[b], g0[b], s_lo, s_hi, taus)
        for k in comps:
            comps[k].append(getattr(tab, k))
    alpha = 1.0 - level
    bounds = {}
    for k, vals in comps.items():
        arr = np.array(vals)
        bounds[k] = (
            np.quantile(arr, alpha / 2, axis=0),
            np.quantile(arr, 1 - alpha / 2, axis=0),
        )
    return bounds
