import json
import os

import numpy as np
import pandas as pd
import pytest

from censdr import cli
from censdr import simulate as sim
from censdr.errors import DataError

from conftest import HSM_PARAMS


def write_config(path, **kwargs):
    with open(path, "w") as fh:
        json.dump(kwargs, fh)
    return str(path)


def simulate_sample(tmp_path, n=1200, seed=7, rho=0.5):
    cfgp = write_config(
        tmp_path / "sim.json",
        n=n, seed=seed, dgp="hsm", hsm_rho=rho,
        hsm_nu=[0.5, 0.8], hsm_mu=[0.35, 0.4, 0.6],
        output_dir=str(tmp_path / "simout"),
    )
    assert cli.main(["simulate", "--config", cfgp]) == 0
    return tmp_path / "simout" / "sample.csv"


BASE = dict(
    z_cols=["const", "x1", "z1"],
    instrument_cols=["z1"],
    sorting_cols=["const"],
    sorting0_cols=["const"],
    s_points=[0.0, 0.7, 1.3],
    y_quantile_indices=[0.3, 0.5, 0.7],
    bootstrap_b=60,
    seed=3,
)


class TestIngest:
    def test_minimal_round_trip(self, tmp_path):
        csv = tmp_path / "tiny.csv"
        csv.write_text("s,y,const,x1\n0.0,,1.0,0.2\n1.5,0.3,1.0,-0.1\n2.0,1.1,1.0,0.4\n")
        cfg = cli.RunConfig.load(write_config(
            tmp_path / "c.json", z_cols=["const", "x1"], instrument_cols=[]
        ))
        table, _ = cli.ingest(str(csv), cfg)
        assert table.n == 3 and table.d.tolist() == [False, True, True]

    def test_simulate_ingest_lossless(self, tmp_path):
        sample = simulate_sample(tmp_path)
        cfg = cli.RunConfig.load(write_config(tmp_path / "c.json", **BASE))
        table, _ = cli.ingest(str(sample), cfg)
        direct, _ = sim.simulate_hsm(1200, HSM_PARAMS, seed=7)
        assert np.array_equal(table.s, direct.s)
        assert np.array_equal(table.y, direct.y, equal_nan=True)
        assert np.array_equal(table.z, direct.z)

    def test_outcome_at_censoring_level_warns(self, tmp_path):
        csv = tmp_path / "bad.csv"
        csv.write_text("s,y,const\n0.0,0.7,1.0\n0.0,0.2,1.0\n1.0,0.5,1.0\n")
        cfg = cli.RunConfig.load(write_config(tmp_path / "c.json", z_cols=["const"]))
        table, _ = cli.ingest(str(csv), cfg)
        assert table.n == 3
        assert any("2 rows" in w for w in cfg.warnings)

    def test_missing_column(self, tmp_path):
        csv = tmp_path / "m.csv"
        csv.write_text("s,y\n1.0,0.3\n")
        cfg = cli.RunConfig.load(write_config(tmp_path / "c.json", z_cols=["const"]))
        with pytest.raises(DataError):
            cli.ingest(str(csv), cfg)

    def test_non_numeric_cell(self, tmp_path):
        csv = tmp_path / "n.csv"
        csv.write_text("s,y,const\n1.0,0.3,1.0\nfoo,0.2,1.0\n")
        cfg = cli.RunConfig.load(write_config(tmp_path / "c.json", z_cols=["const"]))
        with pytest.raises(DataError) as err:
            cli.ingest(str(csv), cfg)
        assert err.value.rows == [1]

    def test_missing_outcome_on_selected(self, tmp_path):
        csv = tmp_path / "o.csv"
        csv.write_text("s,y,const\n1.0,,1.0\n0.0,,1.0\n")
        cfg = cli.RunConfig.load(write_config(tmp_path / "c.json", z_cols=["const"]))
        with pytest.raises(DataError):
            cli.ingest(str(csv), cfg)

    def test_lower_censoring_transform(self, tmp_path):
        csv = tmp_path / "l.csv"
        csv.write_text("s,y,const\n2.0,,1.0\n-1.0,0.4,1.0\n")
        cfg = cli.RunConfig.load(write_config(
            tmp_path / "c.json", z_cols=["const"], censoring="lower", censor_point=2.0
        ))
        table, _ = cli.ingest(str(csv), cfg)
        assert table.s.tolist() == [0.0, 3.0]


class TestCommands:
    def test_fit_and_manifest(self, tmp_path):
        sample = simulate_sample(tmp_path)
        out = tmp_path / "fit"
        cfgp = write_config(tmp_path / "f.json", input=str(sample),
                            output_dir=str(out), **BASE)
        assert cli.main(["fit", "--config", cfgp]) == 0
        man = json.loads((out / "manifest.json").read_text())
        assert man["error"] is None
        assert man["failed_cells"] == []
        coeffs = pd.read_csv(out / "coefficients.csv")
        assert set(coeffs["block"]) == {"mu", "nu", "rho0", "rho"}
        assert np.all(np.isfinite(coeffs["se"]))
        plots = pd.read_csv(out / "plots.csv")
        assert len(plots) == 2 * 3  # interior s x y grid

    def test_bands_small_b(self, tmp_path):
        sample = simulate_sample(tmp_path)
        out = tmp_path / "bands"
        cfg = dict(BASE)
        cfg["bootstrap_b"] = 2  # statistically useless but valid
        cfgp = write_config(tmp_path / "b.json", input=str(sample),
                            output_dir=str(out), **cfg)
        assert cli.main(["bands", "--config", cfgp]) == 0
        bands = pd.read_csv(out / "bands.csv")
        assert np.all(np.isfinite(bands["cv"]))
        assert np.all(bands["lower"] <= bands["estimate"])
        assert np.all(bands["estimate"] <= bands["upper"])

    def test_byte_identical_reruns_and_workers(self, tmp_path):
        sample = simulate_sample(tmp_path)
        cfgp = write_config(tmp_path / "cfg.json", input=str(sample), **BASE)
        blobs = {}
        for tag, workers in (("a", None), ("b", None), ("c", 2)):
            out = tmp_path / tag
            env = os.environ.pop("CENSDR_WORKERS", None)
            try:
                if workers:
                    os.environ["CENSDR_WORKERS"] = str(workers)
                assert cli.main(["bands", "--config", cfgp, "--out", str(out)]) == 0
            finally:
                os.environ.pop("CENSDR_WORKERS", None)
                if env is not None:
                    os.environ["CENSDR_WORKERS"] = env
            blobs[tag] = {
                f: (out / f).read_bytes()
                for f in ("coefficients.csv", "bands.csv", "manifest.json")
            }
        assert blobs["a"] == blobs["b"]
        assert blobs["a"] == blobs["c"]

    def test_decompose(self, tmp_path):
        rng_groups = []
        for seed, rho in ((7, 0.5), (8, 0.5)):
            cfgp = write_config(
                tmp_path / f"s{seed}.json", n=900, seed=seed, hsm_rho=rho,
                hsm_nu=[0.5, 0.8], hsm_mu=[0.35, 0.4, 0.6],
                output_dir=str(tmp_path / f"sim{seed}"),
            )
            assert cli.main(["simulate", "--config", cfgp]) == 0
            df = pd.read_csv(tmp_path / f"sim{seed}" / "sample.csv")
            df["group"] = "m" if seed == 7 else "f"
            rng_groups.append(df)
        pd.concat(rng_groups).to_csv(tmp_path / "both.csv", index=False)
        out = tmp_path / "dec"
        cfg = dict(BASE)
        cfg.update(group_col="group", group1="m", group0="f",
                   strata=[0.7, "inf"], taus=[0.3, 0.5, 0.7], bootstrap_b=6)
        cfgp = write_config(tmp_path / "d.json", input=str(tmp_path / "both.csv"),
                            output_dir=str(out), **cfg)
        assert cli.main(["decompose", "--config", cfgp]) == 0
        dec = pd.read_csv(out / "decomposition.csv")
        resid = dec["total"] - (dec["wage_structure"] + dec["selection_sorting"]
                                + dec["selection_structure"] + dec["composition"])
        assert np.max(np.abs(resid)) < 1e-12
        hours = pd.read_csv(out / "hours_decomposition.csv")
        assert np.allclose(hours["total"], hours["structure"] + hours["composition"])

    def test_exit_codes(self, tmp_path):
        # 2: config problems
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["fit", "--config", str(bad)]) == 2
        cfgp = write_config(tmp_path / "no_out.json", input="x.csv", z_cols=["const"])
        assert cli.main(["fit", "--config", cfgp]) == 2
        # 3: data problems (missing input file)
        cfgp = write_config(tmp_path / "no_input.json", input=str(tmp_path / "nope.csv"),
                            output_dir=str(tmp_path / "o3"), **BASE)
        assert cli.main(["fit", "--config", cfgp]) == 3
        man = json.loads((tmp_path / "o3" / "manifest.json").read_text())
        assert man["error"]["type"] == "DataError"
        # 4: numerical failure (no censored rows -> step 1 separation)
        csv = tmp_path / "all_selected.csv"
        rows = ["s,y,const,x1,z1"]
        rng = np.random.default_rng(0)
        for i in range(60):
            rows.append(f"{1.0 + i / 60},{rng.normal():.4f},1.0,{rng.normal():.4f},{i % 2}")
        csv.write_text("\n".join(rows) + "\n")
        cfgp = write_config(tmp_path / "sep.json", input=str(csv),
                            output_dir=str(tmp_path / "o4"), **BASE)
        assert cli.main(["fit", "--config", cfgp]) == 4
        man = json.loads((tmp_path / "o4" / "manifest.json").read_text())
        assert man["error"]["type"] == "CellFitError"

    def test_manifest_written_on_failure(self, tmp_path):
        # even a config-stage error inside the command writes a manifest
        sample = simulate_sample(tmp_path)
        cfg = dict(BASE)
        cfg["censoring"] = "sideways"
        cfgp = write_config(tmp_path / "c.json", input=str(sample),
                            output_dir=str(tmp_path / "of"), **cfg)
        assert cli.main(["fit", "--config", cfgp]) == 2
        man = json.loads((tmp_path / "of" / "manifest.json").read_text())
        assert man["error"]["type"] == "ConfigError"


def test_plots_frame_interpolates_failed_cells():
    # failed cells are filled for display only and flagged
    from censdr import estimator as est
    from censdr.cli import _plots_frame

    grid = est.GridSpec((0.0, 1.0), (0.1, 0.2, 0.3))
    paths = est.CoefficientPaths(grid=grid, x_cols=(0,), r_cols=(0,),
                                 r0_cols=(0,), n_obs=10)
    paths.rho[(1.0, 0.1)] = np.array([np.arctanh(0.2)])
    paths.rho[(1.0, 0.3)] = np.array([np.arctanh(0.4)])
    paths.failed.add((1.0, 0.2))
    frame = _plots_frame(paths, np.array([1.0]))
    mid = frame[(frame.y == 0.2)].iloc[0]
    assert mid.interpolated == 1
    assert 0.2 < mid.value < 0.4
    assert set(frame[frame.interpolated == 0].y) == {0.1, 0.3}
