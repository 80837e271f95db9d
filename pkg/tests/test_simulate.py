import numpy as np
import pytest
from scipy.stats import kstest

from censdr import gauss2d as g2
from censdr import simulate as sim
from censdr.errors import InvalidDgpError

from conftest import HSM_PARAMS


class TestHsm:
    def test_seed_determinism(self):
        a, _ = sim.simulate_hsm(500, HSM_PARAMS, seed=3)
        b, _ = sim.simulate_hsm(500, HSM_PARAMS, seed=3)
        assert np.array_equal(a.z, b.z)
        assert np.array_equal(a.s, b.s)
        assert np.array_equal(a.y, b.y, equal_nan=True)
        c, _ = sim.simulate_hsm(500, HSM_PARAMS, seed=4)
        assert not np.array_equal(a.s, c.s)

    def test_always_selected_when_index_positive(self):
        params = sim.HsmParams(nu=(0.5, 0.8), mu=(5.0, 0.0, 0.0),
                               sigma_u=1.0, sigma_v=1e-9, rho=0.3)
        data, _ = sim.simulate_hsm(2000, params, seed=5)
        assert data.d.all()

    def test_independence_at_rho_zero(self):
        # no shared covariates, so rho = 0 makes the indicators independent
        params = sim.HsmParams(nu=(0.5, 0.8), mu=(0.35, 0.0, 0.6),
                               sigma_u=1.0, sigma_v=1.0, rho=0.0)
        data, truth = sim.simulate_hsm(100_000, params, seed=7)
        sel = data.d
        i_s = (data.s[sel] <= 0.8).astype(float)
        i_y = (data.y[sel] <= 0.9).astype(float)
        corr = np.corrcoef(i_s, i_y)[0, 1]
        assert abs(corr) < 3.0 / np.sqrt(sel.sum())

    def test_censoring_accounting(self):
        n = 100_000
        data, _ = sim.simulate_hsm(n, HSM_PARAMS, seed=11)
        p_cens = g2.std_cdf(
            -(data.z @ np.asarray(HSM_PARAMS.mu)) / HSM_PARAMS.sigma_v
        ).mean()
        frac = 1.0 - data.d.mean()
        se = np.sqrt(p_cens * (1 - p_cens) / n)
        assert abs(frac - p_cens) <= 3 * se

    def test_pit_uniformity(self):
        # conditional PIT of S and of Y given selection is exactly uniform
        n = 100_000
        data, _ = sim.simulate_hsm(n, HSM_PARAMS, seed=13)
        sel = data.d
        z, x = data.z[sel], data.x[sel]
        mu_idx = z @ np.asarray(HSM_PARAMS.mu)
        p0 = g2.std_cdf(-mu_idx / HSM_PARAMS.sigma_v)
        pit_s = (g2.std_cdf((data.s[sel] - mu_idx) / HSM_PARAMS.sigma_v) - p0) / (1 - p0)
        assert kstest(pit_s, "uniform").pvalue > 0.001
        v = (data.s[sel] - mu_idx) / HSM_PARAMS.sigma_v
        mean_y = x @ np.asarray(HSM_PARAMS.nu) + HSM_PARAMS.sigma_u * HSM_PARAMS.rho * v
        sd_y = HSM_PARAMS.sigma_u * np.sqrt(1 - HSM_PARAMS.rho**2)
        pit_y = g2.std_cdf((data.y[sel] - mean_y) / sd_y)
        assert kstest(pit_y, "uniform").pvalue > 0.001

    def test_joint_cells_match_formula(self):
        # empirical Pr(S>0, Y<=y | Z=z) against the Phi2 expression
        n = 1_000_000
        data, truth = sim.simulate_hsm(n, HSM_PARAMS, seed=17)
        y0 = 0.9
        for zval in (0.0, 1.0):
            m = data.z[:, 2] == zval
            emp = np.mean(data.d[m] & (np.nan_to_num(data.y[m], nan=np.inf) <= y0))
            zz, xx = data.z[m], data.x[m]
            want = np.mean(
                g2.biv_cdf(
                    zz @ truth.mu_path(0.0),
                    -(xx @ truth.nu_path(y0)),
                    -HSM_PARAMS.rho,
                )
            )
            se = np.sqrt(want * (1 - want) / m.sum())
            assert abs(emp - want) <= 3 * se

    def test_true_paths_mapping(self):
        truth = sim.HsmTruth(HSM_PARAMS)
        z = np.array([1.0, 0.3, 1.0])
        s, y = 0.8, 1.1
        assert abs(-(z @ truth.mu_path(s)) - (s - z @ np.array(HSM_PARAMS.mu)) / HSM_PARAMS.sigma_v) < 1e-14
        x = z[:2]
        assert abs(-(x @ truth.nu_path(y)) - (y - x @ np.array(HSM_PARAMS.nu)) / HSM_PARAMS.sigma_u) < 1e-14
        assert abs(np.tanh(truth.rho_path((0,))[0]) - HSM_PARAMS.rho) < 1e-14


def hsm_bdr_truth():
    atoms = np.array([0.0, 0.3, 0.6, 0.9, 1.2, 1.6, 2.2, 3.2])
    ygrid = np.linspace(-2.8, 4.0, 241)
    return sim.bdr_truth_from_hsm(HSM_PARAMS, atoms, ygrid)


class TestBdr:
    def test_seed_determinism(self):
        truth = hsm_bdr_truth()
        a = sim.simulate_bdr(400, truth, seed=3)
        b = sim.simulate_bdr(400, truth, seed=3)
        assert np.array_equal(a.s, b.s)
        assert np.array_equal(a.y, b.y, equal_nan=True)

    def test_constant_rho_matches_hsm_at_grid_nodes(self):
        truth = hsm_bdr_truth()
        n = 100_000
        bdr = sim.simulate_bdr(n, truth, seed=23)
        hsm, _ = sim.simulate_hsm(n, HSM_PARAMS, seed=24)
        y_nodes = truth.y_grid[[80, 130]]
        for s0 in (0.6, 1.2):
            for y0 in y_nodes:
                # two-sample comparison of joint cells at grid nodes
                c1 = np.mean(bdr.d & (bdr.s <= s0) & (np.nan_to_num(bdr.y, nan=np.inf) <= y0))
                c2 = np.mean(hsm.d & (hsm.s <= s0) & (np.nan_to_num(hsm.y, nan=np.inf) <= y0))
                se = np.sqrt((c1 * (1 - c1) + c2 * (1 - c2)) / n)
                assert abs(c1 - c2) <= 4 * max(se, 1e-4)
                # and both match the model formula
                zz, xx = hsm.z, hsm.x
                tr = sim.HsmTruth(HSM_PARAMS)
                want = np.mean(
                    g2.biv_cdf(-(zz @ tr.mu_path(s0)), -(xx @ tr.nu_path(y0)), HSM_PARAMS.rho)
                ) - np.mean(
                    g2.biv_cdf(-(zz @ tr.mu_path(0.0)), -(xx @ tr.nu_path(y0)), HSM_PARAMS.rho)
                )
                assert abs(c1 - want) <= 4 * max(se, 1e-4)

    def test_zero_rho_independence(self):
        # no shared covariates, so a zero sorting path decouples the indicators
        params = sim.HsmParams(nu=(0.5, 0.8), mu=(0.35, 0.0, 0.6),
                               sigma_u=1.0, sigma_v=1.0, rho=0.0)
        atoms = np.array([0.0, 0.4, 0.8, 1.3, 2.0, 3.0])
        truth = sim.bdr_truth_from_hsm(params, atoms, np.linspace(-2.8, 4.0, 201))
        data = sim.simulate_bdr(60_000, truth, seed=29)
        sel = data.d
        i_s = (data.s[sel] <= 0.8).astype(float)
        i_y = (data.y[sel] <= 0.9).astype(float)
        assert abs(np.corrcoef(i_s, i_y)[0, 1]) < 3.5 / np.sqrt(sel.sum())

    def test_invalid_marginal_raises(self):
        truth = hsm_bdr_truth()
        bad = sim.BdrTruth(
            design=truth.design, s_atoms=truth.s_atoms, y_grid=truth.y_grid,
            mu_fn=lambda s: np.array([0.1 + s, 0.0, 0.0]),  # F_S decreasing in s
            nu_fn=truth.nu_fn, rho_fn=truth.rho_fn, r_cols=(0,),
        )
        with pytest.raises(InvalidDgpError):
            sim.validate_bdr_truth(bad, n_check=50, seed=0)

    def test_invalid_sharp_step_raises(self):
        # an abrupt sorting step without bunching/tail bounding is not a
        # valid joint law; the checker must catch it
        truth = hsm_bdr_truth()
        theta = np.arctanh(0.3)
        bad = sim.BdrTruth(
            design=truth.design, s_atoms=truth.s_atoms, y_grid=truth.y_grid,
            mu_fn=truth.mu_fn, nu_fn=truth.nu_fn,
            rho_fn=lambda s, y: np.array([theta if s <= 0.9 else -theta]),
            r_cols=(0,),
        )
        with pytest.raises(InvalidDgpError):
            sim.validate_bdr_truth(bad, n_check=150, seed=0)

    def test_atoms_must_start_at_zero(self):
        truth = hsm_bdr_truth()
        with pytest.raises(InvalidDgpError):
            sim.BdrTruth(
                design=truth.design, s_atoms=np.array([0.5, 1.0]),
                y_grid=truth.y_grid, mu_fn=truth.mu_fn, nu_fn=truth.nu_fn,
                rho_fn=truth.rho_fn,
            )
