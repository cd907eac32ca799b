import math

import numpy as np
import pytest

from dampgp import bench
from dampgp.errors import InputError, ParseError
from dampgp.models import Dataset


class TestBuiltinSystems:
    def test_ids(self):
        assert sorted(bench.builtin_systems()) == ["diag3", "full3", "linear1"]

    def test_unknown_id_lists_available(self):
        with pytest.raises(InputError, match="diag3"):
            bench.get_system("nope")

    def test_linear1_torque(self):
        system = bench.get_system("linear1")
        assert system.torque(np.array([3.0]))[0] == pytest.approx(6.0, rel=1e-15)

    def test_damping_psd_on_random_sweep(self):
        rng = np.random.default_rng(0)
        for system in bench.builtin_systems().values():
            lo, hi = system.domain[:, 0], system.domain[:, 1]
            for q in rng.uniform(lo, hi, size=(200, system.n_dim)):
                d = system.damping(q)
                assert np.linalg.eigvalsh(0.5 * (d + d.T))[0] >= -1e-10 * np.trace(d)

    def test_ground_truth_power_nonnegative(self):
        rng = np.random.default_rng(1)
        for system in bench.builtin_systems().values():
            lo, hi = system.domain[:, 0], system.domain[:, 1]
            Q = rng.uniform(lo, hi, size=(10_000, system.n_dim))
            powers = np.sum(Q * system.torque_batch(Q), axis=1)
            assert np.min(powers) >= 0.0

    def test_diag3_hand_value(self):
        system = bench.get_system("diag3")
        d = system.damping(np.array([10.0, -4.0, 2.0]))
        assert d[0, 0] == pytest.approx(1.0 + 0.004 * 100.0, rel=1e-15)
        assert d[1, 1] == pytest.approx(1.5 + 0.05 * 4.0, rel=1e-15)
        assert d[2, 2] == pytest.approx(2.0 + 0.5 * math.tanh(2.0) ** 2, rel=1e-14)

    def test_psd_sweep_rejects_bad_system(self):
        with pytest.raises(InputError, match="not PSD"):
            bench.make_system(
                "bad", "diagonal", lambda qd: np.array([[-1.0]]), [[-1.0, 1.0]],
                "indefinite", [1.0],
            )


class TestSampleTrajectory:
    def test_periodic_t0_value(self):
        system = bench.get_system("diag3")
        lo, hi = system.domain[:, 0], system.domain[:, 1]
        center, amp = 0.5 * (lo + hi), 0.5 * (hi - lo)
        first = bench.sample_trajectory(system, 10)[0]
        expected = center + amp * np.sin(np.array([0.0, 2.0, 3.0]))
        assert np.allclose(first, expected, rtol=1e-14)

    @pytest.mark.parametrize("waveform", ["periodic", "uniform"])
    def test_stays_in_box(self, waveform):
        system = bench.get_system("full3")
        Q = bench.sample_trajectory(system, 500, seed=2, waveform=waveform)
        assert Q.shape == (500, 3)
        assert np.all(Q >= system.domain[:, 0] - 1e-12)
        assert np.all(Q <= system.domain[:, 1] + 1e-12)

    def test_uniform_deterministic(self):
        system = bench.get_system("diag3")
        a = bench.sample_trajectory(system, 50, seed=9, waveform="uniform")
        b = bench.sample_trajectory(system, 50, seed=9, waveform="uniform")
        assert np.array_equal(a, b)

    def test_bad_arguments(self):
        system = bench.get_system("linear1")
        with pytest.raises(InputError):
            bench.sample_trajectory(system, 0)
        with pytest.raises(InputError):
            bench.sample_trajectory(system, 5, waveform="chirp")


class TestGenerateDataset:
    def test_noise_free_matches_truth(self):
        system = bench.get_system("diag3")
        Q = bench.sample_trajectory(system, 20, seed=0, waveform="uniform")
        data = bench.generate_dataset(system, Q, 0.0)
        assert np.array_equal(data.torques, system.torque_batch(Q))

    def test_noise_statistics(self):
        # CLT check: the empirical noise mean over 1e5 draws stays within
        # 4 standard errors of zero and the std within 2% of nominal
        system = bench.get_system("linear1")
        Q = bench.sample_trajectory(system, 100_000, seed=3, waveform="uniform")
        data = bench.generate_dataset(system, Q, 2.0, seed=4)
        noise = (data.torques - system.torque_batch(Q)).ravel()
        assert abs(noise.mean()) <= 4.0 * 2.0 / math.sqrt(noise.size)
        assert noise.std() == pytest.approx(2.0, rel=0.02)

    def test_seeded_determinism(self):
        system = bench.get_system("diag3")
        Q = bench.sample_trajectory(system, 15, seed=0, waveform="uniform")
        a = bench.generate_dataset(system, Q, 1.0, seed=5)
        b = bench.generate_dataset(system, Q, 1.0, seed=5)
        assert np.array_equal(a.torques, b.torques)

    def test_negative_noise_rejected(self):
        system = bench.get_system("linear1")
        with pytest.raises(InputError):
            bench.generate_dataset(system, np.array([[1.0]]), -0.1)


class TestAdversarialDataset:
    def test_shape_and_determinism(self):
        a = bench.adversarial_dataset(size=40, seed=1)
        b = bench.adversarial_dataset(size=40, seed=1)
        assert a.velocities.shape == (40, 3)
        assert np.array_equal(a.torques, b.torques)

    def test_boundary_cluster_has_negative_power(self):
        data = bench.adversarial_dataset(size=60, seed=0, noise_std=0.0)
        powers = np.sum(data.velocities * data.torques, axis=1)
        n_bad = max(1, round(60 * 0.15))
        assert np.all(powers[-n_bad:] < 0)
        assert np.all(powers[:-n_bad] >= 0)


class TestNmse:
    def test_hand_example(self):
        # truth (0, 2), prediction (1, 1): num = 2, den = 2 -> 1
        res = bench.nmse(np.array([[1.0], [1.0]]), np.array([[0.0], [2.0]]))
        assert res.per_output[0] == pytest.approx(1.0, rel=1e-15)
        assert res.aggregate == pytest.approx(1.0, rel=1e-15)

    def test_mean_predictor_scores_one(self):
        rng = np.random.default_rng(6)
        y = rng.normal(0, 3, (50, 2))
        pred = np.tile(y.mean(axis=0), (50, 1))
        res = bench.nmse(pred, y)
        assert np.allclose(res.per_output, 1.0, rtol=1e-12)

    def test_perfect_prediction(self):
        y = np.random.default_rng(7).normal(0, 1, (10, 3))
        assert bench.nmse(y, y).aggregate == 0.0

    def test_constant_truth_sentinels(self):
        y = np.full((4, 1), 2.0)
        assert bench.nmse(y, y).per_output[0] == 0.0
        assert math.isinf(bench.nmse(y + 1.0, y).per_output[0])

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            bench.nmse(np.ones((2, 2)), np.ones((3, 2)))


class TestRelativeError:
    def test_hand_example(self):
        res = bench.relative_error(
            np.array([[1.0, 3.0]]), np.array([[0.0, 1.0]]), 2.0
        )
        assert np.allclose(res.errors, [[0.5, 1.0]])
        assert np.allclose(res.mean, [0.5, 1.0])
        assert np.allclose(res.variance, [0.0, 0.0])

    def test_bad_normalizer(self):
        with pytest.raises(InputError):
            bench.relative_error(np.ones((1, 1)), np.ones((1, 1)), 0.0)


class TestDatasetIo:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(8)
        data = Dataset(rng.uniform(-25, 25, (30, 3)), rng.normal(0, 10, (30, 3)))
        path = tmp_path / "d.csv"
        bench.write_dataset(path, data)
        back = bench.read_dataset(path)
        assert np.array_equal(back.velocities, data.velocities)
        assert np.array_equal(back.torques, data.torques)

    def test_header(self, tmp_path):
        path = tmp_path / "d.csv"
        bench.write_dataset(path, Dataset(np.ones((1, 2)), np.ones((1, 2))))
        assert path.read_text().splitlines()[0] == "qd_1,qd_2,tau_1,tau_2"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("")
        with pytest.raises(ParseError, match="empty"):
            bench.read_dataset(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "h.csv"
        path.write_text("qd_1,tau_1\n")
        with pytest.raises(ParseError, match="no data rows"):
            bench.read_dataset(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ParseError, match=":1:"):
            bench.read_dataset(path)

    def test_column_count_error_names_line(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("qd_1,tau_1\n1,2\n3\n")
        with pytest.raises(ParseError, match=":3:"):
            bench.read_dataset(path)

    def test_non_numeric_error_names_line(self, tmp_path):
        path = tmp_path / "n.csv"
        path.write_text("qd_1,tau_1\n1,x\n")
        with pytest.raises(ParseError, match=":2:"):
            bench.read_dataset(path)


class TestConfig:
    def test_defaults(self):
        cfg = bench.ExperimentConfig()
        assert cfg.system == "full3"
        assert cfg.kinds == ("ard", "diag", "full")
        assert np.array_equal(cfg.resolved_lengthscales(), [12.0, 12.0, 12.0])

    def test_parse_full_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "# comment line\n"
            "system = diag3\n"
            "train_sizes = 25, 50\n"
            "seeds = 0,1\n"
            "kinds = diag, full\n"
            "lengthscales = 10, 10, 10\n"
            "noise_std = 0.5\n"
            "noise_variance = 2.5  # trailing comment\n"
            "constrained = true\n"
            "budget = 7\n"
        )
        cfg = bench.read_config(path)
        assert cfg.system == "diag3"
        assert cfg.train_sizes == (25, 50)
        assert cfg.seeds == (0, 1)
        assert cfg.kinds == ("diag", "full")
        assert cfg.lengthscales == (10.0, 10.0, 10.0)
        assert cfg.constrained is True
        assert cfg.budget == 7
        assert cfg.noise_variance == 2.5

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("warp_speed = 9\n")
        with pytest.raises(InputError, match="warp_speed"):
            bench.read_config(path)

    def test_bad_value_names_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("system = diag3\nbudget = many\n")
        with pytest.raises(ParseError, match=":2:"):
            bench.read_config(path)

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("just a line\n")
        with pytest.raises(ParseError):
            bench.read_config(path)

    def test_invalid_sizes_rejected(self):
        with pytest.raises(InputError):
            bench.ExperimentConfig(val_size=0)
        with pytest.raises(InputError):
            bench.ExperimentConfig(train_sizes=(0,))
