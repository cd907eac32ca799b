import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dampgp import bench, charts, cli, modelio, models
from dampgp.errors import ParseError
from dampgp.kernels import DiagTorqueKernel
from dampgp.models import Dataset, PriorMean, fit, fit_prior_mean

SMALL_CFG = """\
system = linear1
train_sizes = 20
val_size = 15
test_size = 25
noise_std = 0.5
seeds = 0,1
kinds = diag
lengthscales = 12
noise_variance = 1.0
budget = 5
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(SMALL_CFG)
    return path


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


class TestGenerate:
    def test_writes_expected_files(self, tmp_path, cfg_path):
        out = tmp_path / "data"
        assert run_cli("--config", cfg_path, "--out-dir", out, "generate") == 0
        for seed in (0, 1):
            for split, rows in (("train", 20), ("val", 15), ("test", 25)):
                data = bench.read_dataset(out / f"seed{seed}_{split}.csv")
                assert data.n_samples == rows
                assert data.n_dim == 1
        manifest = json.loads((out / "generate_manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert len(manifest["files"]) == 6

    def test_rerun_is_byte_identical(self, tmp_path, cfg_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_cli("--config", cfg_path, "--out-dir", out1, "generate")
        run_cli("--config", cfg_path, "--out-dir", out2, "generate")
        for f in sorted(out1.glob("*.csv")):
            assert f.read_bytes() == (out2 / f.name).read_bytes()

    def test_unknown_system_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("system = warp9\n")
        code = run_cli("--config", bad, "--out-dir", tmp_path, "generate")
        assert code == cli.EXIT_INPUT

    def test_missing_config_exit_code(self, tmp_path):
        assert run_cli("--out-dir", tmp_path, "generate") == cli.EXIT_INPUT


class TestFit:
    def _generated(self, tmp_path, cfg_path):
        out = tmp_path / "data"
        run_cli("--config", cfg_path, "--out-dir", out, "generate")
        return out / "seed0_train.csv", out / "seed0_val.csv", out / "seed0_test.csv"

    def test_fit_reports_bound(self, tmp_path, cfg_path, capsys):
        train, val, _ = self._generated(tmp_path, cfg_path)
        model_path = tmp_path / "m.model"
        code = run_cli(
            "fit", train, "--kind", "diag", "--val", val,
            "--lengthscales", "12", "--noise-variance", "1.0",
            "--budget", "5", "--out", model_path,
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "passivity bound: c=" in out
        assert "feasible=" in out
        assert model_path.exists()

    def test_ard_bound_not_applicable(self, tmp_path, cfg_path, capsys):
        train, val, _ = self._generated(tmp_path, cfg_path)
        code = run_cli(
            "fit", train, "--kind", "ard", "--val", val,
            "--lengthscales", "12", "--budget", "3", "--out", tmp_path / "a.model",
        )
        assert code == 0
        assert "n/a" in capsys.readouterr().out

    def test_refit_byte_identical(self, tmp_path, cfg_path):
        train, val, _ = self._generated(tmp_path, cfg_path)
        p1, p2 = tmp_path / "m1.model", tmp_path / "m2.model"
        args = ["fit", train, "--kind", "diag", "--val", val,
                "--lengthscales", "12", "--budget", "5"]
        run_cli(*args, "--out", p1)
        run_cli(*args, "--out", p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_lengthscale_count(self, tmp_path, cfg_path):
        train, val, _ = self._generated(tmp_path, cfg_path)
        code = run_cli(
            "fit", train, "--kind", "diag", "--val", val,
            "--lengthscales", "12,12", "--budget", "3", "--out", tmp_path / "m.model",
        )
        assert code == cli.EXIT_INPUT

    def test_missing_train_file(self, tmp_path):
        code = run_cli(
            "fit", tmp_path / "absent.csv", "--kind", "diag",
            "--val", tmp_path / "absent.csv", "--lengthscales", "12",
            "--out", tmp_path / "m.model",
        )
        assert code == cli.EXIT_INPUT

    def test_constrained_infeasible_exit_code(self, tmp_path):
        # zero prior mean slope (anti-symmetric data) with nonzero residual
        # makes the diagonal constraint unsatisfiable at any positive scale
        q = np.array([[1.0], [-1.0], [2.0], [-2.0]])
        data = Dataset(q, -3.0 * q)
        train = tmp_path / "t.csv"
        bench.write_dataset(train, data)
        code = run_cli(
            "fit", train, "--kind", "diag", "--val", train,
            "--lengthscales", "12", "--constrained", "--budget", "3",
            "--out", tmp_path / "m.model",
        )
        assert code == cli.EXIT_INFEASIBLE


class TestEvaluate:
    def _fitted(self, tmp_path, cfg_path):
        out = tmp_path / "data"
        run_cli("--config", cfg_path, "--out-dir", out, "generate")
        model_path = tmp_path / "m.model"
        run_cli(
            "fit", out / "seed0_train.csv", "--kind", "diag",
            "--val", out / "seed0_val.csv", "--lengthscales", "12",
            "--noise-variance", "1.0", "--budget", "5", "--out", model_path,
        )
        return model_path, out / "seed0_test.csv"

    def test_metrics_csv_rows(self, tmp_path, cfg_path):
        model_path, test_path = self._fitted(tmp_path, cfg_path)
        out_csv = tmp_path / "metrics.csv"
        assert run_cli("evaluate", model_path, test_path, "--out", out_csv,
                       "--system", "linear1") == 0
        lines = out_csv.read_text().splitlines()
        assert lines[0] == "row,output,nmse,rel_err_mean,rel_err_var"
        rows = [line.split(",") for line in lines[1:]]
        assert [r[0] for r in rows] == ["model", "model", "mean_baseline", "mean_baseline"]
        assert [r[1] for r in rows] == ["1", "aggregate", "1", "aggregate"]
        model_nmse = float(rows[0][2])
        baseline_nmse = float(rows[2][2])
        assert model_nmse < baseline_nmse  # the GP must beat the mean predictor

    def test_dimension_mismatch(self, tmp_path, cfg_path):
        model_path, _ = self._fitted(tmp_path, cfg_path)
        other = tmp_path / "other.csv"
        bench.write_dataset(other, Dataset(np.ones((2, 2)), np.ones((2, 2))))
        assert run_cli("evaluate", model_path, other,
                       "--out", tmp_path / "x.csv") == cli.EXIT_INPUT

    def test_corrupt_model_file(self, tmp_path, cfg_path):
        _, test_path = self._fitted(tmp_path, cfg_path)
        bad = tmp_path / "bad.model"
        bad.write_text("not a model\n")
        assert run_cli("evaluate", bad, test_path,
                       "--out", tmp_path / "x.csv") == cli.EXIT_INPUT


class TestEfficiency:
    def test_small_run(self, tmp_path, cfg_path):
        out = tmp_path / "eff"
        assert run_cli("--config", cfg_path, "--out-dir", out,
                       "efficiency", "--sizes", "10,20") == 0
        lines = (out / "efficiency.csv").read_text().splitlines()
        assert lines[0] == "kind,size,seed,output,nmse"
        # 1 kind x 2 sizes x 2 seeds x (1 output + aggregate)
        assert len(lines) == 1 + 1 * 2 * 2 * 2
        svg = (out / "efficiency.svg").read_text()
        ET.fromstring(svg)  # well-formed XML
        assert "diag" in svg  # legend names the series
        manifest = json.loads((out / "efficiency_manifest.json").read_text())
        assert manifest["sizes"] == [10, 20]

    def test_unsorted_sizes_rejected(self, tmp_path, cfg_path):
        code = run_cli("--config", cfg_path, "--out-dir", tmp_path,
                       "efficiency", "--sizes", "20,10")
        assert code == cli.EXIT_INPUT

    def test_run_efficiency_deterministic(self):
        cfg = bench.ExperimentConfig(
            system="linear1", val_size=10, test_size=10, seeds=(0,),
            kinds=("diag",), lengthscales=(12.0,), noise_variance=1.0, budget=3,
        )
        r1 = cli.run_efficiency(cfg, [10])
        r2 = cli.run_efficiency(cfg, [10])
        assert r1 == r2


class TestPower:
    def _model(self, tmp_path):
        rng = np.random.default_rng(0)
        q = rng.uniform(-5, 5, (15, 1))
        data = Dataset(q, 2.0 * q + rng.normal(0, 0.2, (15, 1)))
        prior = fit_prior_mean(data)
        model = fit("diag", DiagTorqueKernel(np.array([12.0]), np.array([1e-4])),
                    prior, data, 1.0)
        path = tmp_path / "m.model"
        modelio.save_model(path, model, constrained=True)
        return path

    def test_passive_verdict(self, tmp_path, capsys):
        model_path = self._model(tmp_path)
        out = tmp_path / "pow"
        code = run_cli("--out-dir", out, "power", model_path,
                       "--domain=-5:5", "--samples", "200")
        assert code == 0
        assert "PASSIVE (min=" in capsys.readouterr().out
        lines = (out / "power.csv").read_text().splitlines()
        assert lines[0] == "qd_1,power"
        assert len(lines) == 1 + 200 + 2 + 1  # samples + corners + origin
        ET.fromstring((out / "power.svg").read_text())

    def test_bad_domain_exit_code(self, tmp_path):
        model_path = self._model(tmp_path)
        assert run_cli("--out-dir", tmp_path, "power", model_path,
                       "--domain=-5,5") == cli.EXIT_INPUT

    def test_numerical_error_exit_code(self, tmp_path, monkeypatch):
        model_path = self._model(tmp_path)

        def boom(*args, **kwargs):
            raise cli.NumericalError("factorization failed")

        monkeypatch.setattr(cli.passivity, "passivity_sweep", boom)
        assert run_cli("--out-dir", tmp_path, "power", model_path,
                       "--domain=-5:5") == cli.EXIT_NUMERICAL


class TestModelIo:
    def _model(self, kind, rng):
        n = 2
        q = rng.uniform(-2, 2, (12, n))
        data = Dataset(q, q * np.array([1.0, 2.0]) + rng.normal(0, 0.2, (12, n)))
        prior = PriorMean.zero(n) if kind == "ard" else fit_prior_mean(data)
        hyp = rng.uniform(0.2, 1.0, (n, n)) if kind == "full" else rng.uniform(0.2, 1.0, n)
        kernel = models._make_kernel(kind, np.ones(n), hyp)
        return fit(kind, kernel, prior, data, 0.7)

    @pytest.mark.parametrize("kind", ["ard", "diag", "full"])
    def test_round_trip_predictions_identical(self, tmp_path, kind):
        rng = np.random.default_rng(1)
        model = self._model(kind, rng)
        path = tmp_path / "m.model"
        modelio.save_model(path, model, constrained=False)
        back, constrained = modelio.load_model(path)
        assert constrained is False
        qs = rng.uniform(-2, 2, (5, 2))
        assert np.array_equal(
            models.predict_torque_batch(model, qs),
            models.predict_torque_batch(back, qs),
        )

    def test_constrained_flag_round_trip(self, tmp_path):
        model = self._model("diag", np.random.default_rng(2))
        path = tmp_path / "m.model"
        modelio.save_model(path, model, constrained=True)
        assert modelio.load_model(path)[1] is True

    def test_missing_magic(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text("something else\n")
        with pytest.raises(ParseError, match="model file"):
            modelio.load_model(path)

    def test_missing_block(self, tmp_path):
        model = self._model("diag", np.random.default_rng(3))
        path = tmp_path / "m.model"
        modelio.save_model(path, model)
        text = path.read_text()
        path.write_text(text.split("[train_velocities]")[0])
        with pytest.raises(ParseError, match="train_velocities"):
            modelio.load_model(path)


class TestCharts:
    def test_line_chart_names_every_series(self, tmp_path):
        path = tmp_path / "c.svg"
        charts.line_chart(
            path,
            {"alpha": [(1, 1.0), (2, 0.5)], "beta": [(1, 2.0), (2, 0.25)]},
            title="t", xlabel="x", ylabel="y", log_y=True,
        )
        svg = path.read_text()
        ET.fromstring(svg)
        assert "alpha" in svg and "beta" in svg
        assert svg.count("<polyline") == 2

    def test_histogram_min_bins(self, tmp_path):
        assert charts.freedman_diaconis_bins(np.array([1.0, 1.0, 1.0])) == 10
        vals = np.random.default_rng(4).normal(0, 1, 500)
        assert charts.freedman_diaconis_bins(vals) >= 10
        path = tmp_path / "h.svg"
        charts.histogram(path, vals, title="t", xlabel="x")
        svg = path.read_text()
        ET.fromstring(svg)
        assert svg.count("<rect") - 1 >= 10  # background rect plus >= 10 bars

    def test_titles_are_escaped(self, tmp_path):
        path = tmp_path / "e.svg"
        charts.histogram(path, np.array([0.0, 1.0]), title="a < b & c", xlabel="x")
        ET.fromstring(path.read_text())
