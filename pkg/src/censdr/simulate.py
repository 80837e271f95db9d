"""Synthetic data generators used as verification oracles.

`simulate_hsm` draws from the Gaussian tobit type-3 selection model (the
constant-correlation special case whose implied coefficient paths are known
in closed form). `simulate_bdr` draws from a general model specified
through its conditional joint CDF: the selection variable lives on a finite
atom grid and the outcome is drawn by inverse CDF on a fine grid, which
reproduces the target CDF exactly at all grid nodes and is a valid joint
law whenever the checked cell probabilities are nonnegative.

All randomness comes from counter-based Philox streams keyed by the seed;
row i consumes fixed draw positions, so tables are bit-reproducible.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import gauss2d
from .errors import InvalidDgpError
from .estimator import CoefficientPaths, GridSpec
from .likelihood import ObservationTable, link

_PAD = 1.0  # outcome overflow bins land this far outside the fine grid


@dataclass(frozen=True)
class Column:
    name: str
    kind: str                 # "const" | "normal" | "bernoulli"
    param: float = 1.0        # sd for normal, success probability for bernoulli
    instrument: bool = False
    loc: float = 0.0          # mean shift for normal columns


@dataclass(frozen=True)
class Design:
    columns: tuple

    @property
    def names(self):
        return tuple(c.name for c in self.columns)

    @property
    def x_cols(self):
        return tuple(i for i, c in enumerate(self.columns) if not c.instrument)

    @property
    def const_col(self):
        for i, c in enumerate(self.columns):
            if c.kind == "const":
                return i
        raise ValueError("design has no constant column")

    def sample(self, rng, n):
        cols = []
        for c in self.columns:
            if c.kind == "const":
                cols.append(np.ones(n))
            elif c.kind == "normal":
                cols.append(rng.standard_normal(n) * c.param + c.loc)
            elif c.kind == "bernoulli":
                cols.append((rng.random(n) < c.param).astype(np.float64))
            else:
                raise ValueError(f"unknown column kind {c.kind!r}")
        return np.column_stack(cols)


def default_design():
    """Intercept, one standard-normal regressor, one Bernoulli(1/2) instrument."""
    return Design(
        (
            Column("const", "const"),
            Column("x1", "normal"),
            Column("z1", "bernoulli", 0.5, instrument=True),
        )
    )


@dataclass(frozen=True)
class HsmParams:
    """Gaussian selection-model parameters: Y* = X'nu + sU*U, S* = Z'mu + sV*V."""

    nu: tuple
    mu: tuple
    sigma_u: float
    sigma_v: float
    rho: float
    design: Design = field(default_factory=default_design)

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise ValueError("|rho| must be < 1")
        if self.sigma_u <= 0 or self.sigma_v <= 0:
            raise ValueError("sigmas must be positive")
        if len(self.mu) != len(self.design.columns):
            raise ValueError("mu length must match the design")
        if len(self.nu) != len(self.design.x_cols):
            raise ValueError("nu length must match the outcome columns")


class HsmTruth:
    """Closed-form coefficient paths implied by the Gaussian model."""

    def __init__(self, params):
        self.params = params
        self.design = params.design

    def mu_path(self, s):
        e = np.zeros(len(self.design.columns))
        e[self.design.const_col] = 1.0
        return (np.asarray(self.params.mu) - s * e) / self.params.sigma_v

    def nu_path(self, y):
        x_cols = self.design.x_cols
        const_pos = x_cols.index(self.design.const_col)
        e = np.zeros(len(x_cols))
        e[const_pos] = 1.0
        return (np.asarray(self.params.nu) - y * e) / self.params.sigma_u

    def rho_path(self, r_cols):
        """Sorting index vector on the given layout: atanh(rho) on the constant."""
        out = np.zeros(len(r_cols))
        out[list(r_cols).index(self.design.const_col)] = np.arctanh(self.params.rho)
        return out

    def paths(self, grid, r_cols=None, r0_cols=None):
        """Materialize true CoefficientPaths on a grid for comparisons."""
        x_cols = self.design.x_cols
        r_cols = tuple(r_cols) if r_cols is not None else tuple(range(len(self.design.columns)))
        r0_cols = tuple(r0_cols) if r0_cols is not None else x_cols
        paths = CoefficientPaths(grid=grid, x_cols=x_cols, r_cols=r_cols, r0_cols=r0_cols)
        for s in grid.s_points:
            paths.mu[s] = self.mu_path(s)
        for y in grid.y_points:
            paths.nu[y] = self.nu_path(y)
            paths.rho0[y] = self.rho_path(r0_cols)
        for cell in grid.cells():
            paths.rho[cell] = self.rho_path(r_cols)
        return paths


def simulate_hsm(n, params, seed):
    """Draw n rows from the Gaussian selection model; returns (table, truth)."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = params.design.sample(rng, n)
    x = z[:, params.design.x_cols]
    e = rng.standard_normal((n, 2))
    v = e[:, 0]
    u = params.rho * e[:, 0] + np.sqrt(1.0 - params.rho**2) * e[:, 1]
    s_star = z @ np.asarray(params.mu) + params.sigma_v * v
    y_star = x @ np.asarray(params.nu) + params.sigma_u * u
    s = np.maximum(s_star, 0.0)
    y = np.where(s > 0, y_star, np.nan)
    table = ObservationTable(
        z=z, s=s, y=y, x_cols=params.design.x_cols, z_names=params.design.names
    )
    return table, HsmTruth(params)


# -- general BDR generator -------------------------------------------------------


@dataclass
class BdrTruth:
    """A BDR model given through its coefficient paths on sampling grids.

    s_atoms is the (ascending) support of the discrete selection variable;
    the first atom must be 0 and collects the censored mass, the last atom
    absorbs its upper tail. y_grid is the fine grid carrying the outcome's
    inverse-CDF sampler.
    """

    design: Design
    s_atoms: np.ndarray
    y_grid: np.ndarray
    mu_fn: Callable[[float], np.ndarray]
    nu_fn: Callable[[float], np.ndarray]
    rho_fn: Callable[[float, float], np.ndarray]
    r_cols: Optional[tuple] = None

    def __post_init__(self):
        self.s_atoms = np.asarray(self.s_atoms, dtype=np.float64)
        self.y_grid = np.asarray(self.y_grid, dtype=np.float64)
        if self.s_atoms[0] != 0.0 or np.any(np.diff(self.s_atoms) <= 0):
            raise InvalidDgpError("s_atoms must be ascending and start at 0")
        if np.any(np.diff(self.y_grid) <= 0):
            raise InvalidDgpError("y_grid must be strictly ascending")
        if self.r_cols is None:
            self.r_cols = tuple(range(len(self.design.columns)))

    def marginal_s(self, z, s):
        return gauss2d.std_cdf(-(z @ self.mu_fn(s)))

    def marginal_y(self, x, y):
        return gauss2d.std_cdf(-(x @ self.nu_fn(y)))

    def joint(self, z, x, s, y):
        corr = link(z[:, self.r_cols] @ self.rho_fn(s, y))
        return gauss2d.biv_cdf(-(z @ self.mu_fn(s)), -(x @ self.nu_fn(y)), corr)


def bdr_truth_from_hsm(params, s_atoms, y_grid, r_cols=(0,)):
    """BDR sampling representation of a Gaussian selection model."""
    truth = HsmTruth(params)
    return BdrTruth(
        design=params.design,
        s_atoms=s_atoms,
        y_grid=y_grid,
        mu_fn=truth.mu_path,
        nu_fn=truth.nu_path,
        rho_fn=lambda s, y: truth.rho_path(r_cols),
        r_cols=tuple(r_cols),
    )


def validate_bdr_truth(truth, n_check=200, seed=0, tol=1e-8):
    """Sample covariate rows and check the implied cells form a valid law."""
    rng = np.random.Generator(np.random.Philox(key=seed + 10_000_019))
    z = truth.design.sample(rng, n_check)
    x = z[:, truth.design.x_cols]
    atoms = truth.s_atoms
    fs = np.column_stack([truth.marginal_s(z, s) for s in atoms])
    if np.any(np.diff(fs, axis=1) < -tol):
        raise InvalidDgpError("selection marginal decreases across atoms")
    if np.any(fs < -tol) or np.any(fs > 1 + tol):
        raise InvalidDgpError("selection marginal outside [0, 1]")
    prev = None
    for m, y in enumerate(truth.y_grid):
        f2 = np.column_stack([truth.joint(z, x, s, y) for s in atoms])
        fy = truth.marginal_y(x, y)
        # Frechet coherence of every joint value
        if np.any(f2 > np.minimum(fs, fy[:, None]) + 1e-7):
            raise InvalidDgpError(f"joint exceeds a marginal at y={y}")
        if np.any(f2 < fs + fy[:, None] - 1.0 - 1e-7):
            raise InvalidDgpError(f"joint below the Frechet lower bound at y={y}")
        # cell masses: differences across s atoms, plus the absorbing top
        num = np.diff(f2, axis=1)
        top = fy[:, None] - f2[:, [-1]]
        cells_y = np.hstack([f2[:, [0]], num, top])
        if np.any(cells_y < -tol):
            raise InvalidDgpError(
                f"negative selection-cell probability at y={y} "
                f"(min {cells_y.min():.3e})"
            )
        if prev is not None and np.any(cells_y - prev < -tol):
            raise InvalidDgpError(
                f"cell CDF decreases in y at y={y} (min step {(cells_y - prev).min():.3e})"
            )
        prev = cells_y
    return True


def simulate_bdr(n, truth, seed, validate=True, n_check=200):
    """Draw n rows following the supplied BDR truth."""
    if validate:
        validate_bdr_truth(truth, n_check=n_check, seed=seed)
    rng = np.random.Generator(np.random.Philox(key=seed))
    z = truth.design.sample(rng, n)
    x = z[:, truth.design.x_cols]
    u1 = rng.random(n)
    u2 = rng.random(n)

    atoms = truth.s_atoms
    fs = np.column_stack([truth.marginal_s(z, s) for s in atoms])
    fs[:, -1] = 1.0  # top atom absorbs its upper tail
    idx = np.sum(u1[:, None] > fs, axis=1)  # first atom with cumulative >= u1
    idx = np.minimum(idx, len(atoms) - 1)
    s = atoms[idx]

    y = np.full(n, np.nan)
    ygrid = truth.y_grid
    for k in range(1, len(atoms)):
        rows = np.where((idx == k) & (atoms[k] > 0))[0]
        if rows.size == 0:
            continue
        zk, xk = z[rows], x[rows]
        f_hi = np.column_stack([truth.joint(zk, xk, atoms[k], yy) for yy in ygrid])
        if k == len(atoms) - 1:
            f_hi = np.column_stack([truth.marginal_y(xk, yy) for yy in ygrid])
        f_lo = np.column_stack([truth.joint(zk, xk, atoms[k - 1], yy) for yy in ygrid])
        pk = np.maximum(fs[rows, k] - (fs[rows, k - 1] if k > 0 else 0.0), 1e-300)
        cond = np.clip((f_hi - f_lo) / pk[:, None], 0.0, 1.0)
        cond = np.maximum.accumulate(cond, axis=1)  # guard tiny non-monotone noise
        y[rows] = _inverse_interp(cond, ygrid, u2[rows])
    table = ObservationTable(
        z=z, s=s, y=y, x_cols=truth.design.x_cols, z_names=truth.design.names
    )
    return table


def _inverse_interp(cdf_rows, grid, u):
    """Rowwise inverse of piecewise-linear CDFs on a shared grid."""
    m = grid.size
    pos = np.sum(cdf_rows < u[:, None], axis=1)  # first index with cdf >= u
    out = np.empty(u.size)
    below = pos == 0
    above = pos == m
    out[below] = grid[0] - _PAD
    out[above] = grid[-1] + _PAD
    mid = ~below & ~above
    rows = np.where(mid)[0]
    hi = pos[mid]
    lo = hi - 1
    c_lo = cdf_rows[rows, lo]
    c_hi = cdf_rows[rows, hi]
    w = np.where(c_hi > c_lo, (u[mid] - c_lo) / np.maximum(c_hi - c_lo, 1e-300), 1.0)
    out[mid] = grid[lo] + w * (grid[hi] - grid[lo])
    return out
