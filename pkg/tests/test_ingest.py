import numpy as np
import pytest

from rocketphm.errors import ConfigError, IntegrityError, ParseError
from rocketphm import ingest
from rocketphm.ingest import (
    DEFAULT_SENSORS,
    SENSOR_NAMES,
    apply_standardizer,
    fit_standardizer,
    make_windows,
    parse_cmapss,
    select_sensors,
    split_by_unit,
)

from conftest import cmapss_line, make_trajectory


class TestParse:
    def test_two_line_fixture_round_trips_verbatim(self, cmapss_file):
        sensors_1 = [1.5 * s + 0.25 for s in range(21)]
        sensors_2 = [2.0 * s - 1.0 for s in range(21)]
        path = cmapss_file([
            cmapss_line(1, 1, sensors_1),
            cmapss_line(1, 2, sensors_2),
        ])
        trajs = parse_cmapss(path, "FD001")
        assert len(trajs) == 1
        traj = trajs[0]
        assert traj.unit_id == 1
        assert traj.n_cycles == 2
        # values pass through exactly as their decimal representation
        expected = np.array([sensors_1, sensors_2]).T
        np.testing.assert_array_equal(traj.sensors, np.round(expected, 4))

    def test_empty_file_gives_empty_list(self, cmapss_file):
        assert parse_cmapss(cmapss_file([]), "FD001") == []

    def test_multiple_units_sorted(self, cmapss_file):
        path = cmapss_file([
            cmapss_line(2, 1), cmapss_line(2, 2),
            cmapss_line(1, 1),
        ])
        trajs = parse_cmapss(path, "FD001")
        assert [t.unit_id for t in trajs] == [1, 2]
        assert [t.n_cycles for t in trajs] == [1, 2]

    def test_wrong_field_count_names_line(self, cmapss_file):
        path = cmapss_file([cmapss_line(1, 1), "1 2 3"])
        with pytest.raises(ParseError, match=":2"):
            parse_cmapss(path, "FD001")

    def test_non_numeric_token_names_line(self, cmapss_file):
        bad = cmapss_line(1, 1).replace("1.0000", "oops", 1)
        path = cmapss_file([bad])
        with pytest.raises(ParseError, match=":1"):
            parse_cmapss(path, "FD001")

    def test_non_contiguous_cycles_rejected(self, cmapss_file):
        path = cmapss_file([cmapss_line(1, 1), cmapss_line(1, 3)])
        with pytest.raises(IntegrityError, match="unit 1"):
            parse_cmapss(path, "FD001")

    def test_unknown_dataset_id(self, cmapss_file):
        with pytest.raises(ConfigError):
            parse_cmapss(cmapss_file([]), "FD009")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_cmapss(tmp_path / "nope.txt", "FD001")

    def test_round_trip_all_21_sensors(self, cmapss_file, rng):
        rows = []
        values = rng.normal(100, 5, (4, 21)).round(4)
        for i in range(4):
            rows.append(cmapss_line(1, i + 1, list(values[i])))
        trajs = parse_cmapss(cmapss_file(rows), "FD001")
        selected = select_sensors(trajs[0], SENSOR_NAMES)
        np.testing.assert_array_equal(selected, values.T)


class TestSelectSensors:
    def test_default_selection_is_14_rows(self):
        traj = make_trajectory(n_cycles=7)
        assert select_sensors(traj).shape == (14, 7)
        assert len(DEFAULT_SENSORS) == 14

    def test_single_sensor_matches_column(self):
        traj = make_trajectory(n_cycles=5)
        np.testing.assert_array_equal(select_sensors(traj, ["s1"])[0], traj.sensors[0])
        np.testing.assert_array_equal(select_sensors(traj, ["s21"])[0], traj.sensors[20])

    def test_order_follows_request(self):
        traj = make_trajectory(n_cycles=5)
        out = select_sensors(traj, ["s3", "s1"])
        np.testing.assert_array_equal(out[0], traj.sensors[2])
        np.testing.assert_array_equal(out[1], traj.sensors[0])

    def test_empty_selection_is_error(self):
        with pytest.raises(ConfigError):
            select_sensors(make_trajectory(), [])

    def test_unknown_sensor_is_error(self):
        with pytest.raises(ConfigError, match="s22"):
            select_sensors(make_trajectory(), ["s22"])


class TestStandardizer:
    def test_pooled_mean_and_sample_std(self):
        traj = make_trajectory(sensor_fn=lambda s, t: np.array([1.0, 2.0, 3.0]), n_cycles=3)
        stats = fit_standardizer([traj], ["s1"])
        assert stats.mean[0] == pytest.approx(2.0)
        assert stats.std[0] == pytest.approx(1.0)  # ddof=1 on [1, 2, 3]

    def test_constant_sensor_substituted_with_warning(self):
        traj = make_trajectory(sensor_fn=lambda s, t: np.full(3, 5.0), n_cycles=3)
        with pytest.warns(UserWarning, match="constant"):
            stats = fit_standardizer([traj], ["s1"])
        assert stats.mean[0] == pytest.approx(5.0)
        assert stats.std[0] == 1.0
        assert stats.substituted[0]

    def test_pooling_across_trajectories(self):
        t1 = make_trajectory(unit_id=1, sensor_fn=lambda s, t: np.zeros(2), n_cycles=2)
        t2 = make_trajectory(unit_id=2, sensor_fn=lambda s, t: np.full(2, 2.0), n_cycles=2)
        stats = fit_standardizer([t1, t2], ["s1"])
        assert stats.mean[0] == pytest.approx(1.0)  # hand-computed pooled mean

    def test_apply_is_zscore(self):
        traj = make_trajectory(sensor_fn=lambda s, t: t.astype(float), n_cycles=9)
        stats = fit_standardizer([traj], ["s1", "s2"])
        out = apply_standardizer(traj, stats)
        assert np.abs(out.mean(axis=1)).max() < 1e-9
        assert np.abs(out.std(axis=1, ddof=1) - 1.0).max() < 1e-9

    def test_identity_stats(self):
        traj = make_trajectory(n_cycles=4)
        stats = fit_standardizer([traj], ["s1"])
        stats.mean[:] = 0.0
        stats.std[:] = 1.0
        np.testing.assert_array_equal(apply_standardizer(traj, stats), traj.sensors[[0]])

    def test_arithmetic_example(self):
        traj = make_trajectory(sensor_fn=lambda s, t: np.array([4.0, 4.0]), n_cycles=2)
        stats = fit_standardizer([traj], ["s1"])
        stats.mean[:] = 2.0
        stats.std[:] = 2.0
        assert apply_standardizer(traj, stats)[0, 0] == pytest.approx(1.0)

    def test_retained_training_pool_standardized(self, rng):
        trajs = [make_trajectory(unit_id=i, n_cycles=40, seed=i) for i in range(3)]
        stats = fit_standardizer(trajs, DEFAULT_SENSORS)
        pooled = np.concatenate([apply_standardizer(t, stats) for t in trajs], axis=1)
        assert np.abs(pooled.mean(axis=1)).max() < 1e-9
        assert np.abs(pooled.std(axis=1, ddof=1) - 1.0).max() < 1e-9


class TestWindows:
    def test_counting_examples(self):
        values = np.arange(10, dtype=float).reshape(2, 5)
        ends = [w.end_cycle for w in make_windows(values, window_length=3, stride=1)]
        assert ends == [3, 4, 5]
        assert len(make_windows(np.zeros((1, 3)), window_length=3)) == 1

    def test_short_trajectory_warns_and_skips(self):
        with pytest.warns(UserWarning, match="skipped"):
            assert make_windows(np.zeros((1, 2)), window_length=3) == []

    def test_window_content_and_label(self):
        values = np.arange(12, dtype=float).reshape(2, 6)
        labels = np.array([0, 0, 1, 1, 2, 3])
        windows = make_windows(values, labels, window_length=4, stride=2, unit_id=9)
        assert [w.end_cycle for w in windows] == [4, 6]
        assert [w.label for w in windows] == [1, 3]
        np.testing.assert_array_equal(windows[0].values, values[:, 0:4])
        np.testing.assert_array_equal(windows[1].values, values[:, 2:6])
        assert all(w.unit_id == 9 for w in windows)

    def test_count_formula_property(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 60))
            window = int(rng.integers(2, 20))
            stride = int(rng.integers(1, 6))
            values = np.zeros((1, n))
            if n < window:
                with pytest.warns(UserWarning):
                    windows = make_windows(values, window_length=window, stride=stride)
                assert windows == []
            else:
                windows = make_windows(values, window_length=window, stride=stride)
                assert len(windows) == (n - window) // stride + 1

    def test_bad_parameters(self):
        with pytest.raises(ConfigError):
            make_windows(np.zeros((1, 5)), window_length=1)
        with pytest.raises(ConfigError):
            make_windows(np.zeros((1, 5)), window_length=3, stride=0)


class TestSplit:
    def test_80_20_partition_reproducible(self):
        trajs = [make_trajectory(unit_id=i) for i in range(1, 101)]
        train_a, test_a = split_by_unit(trajs, 0.2, seed=42)
        train_b, test_b = split_by_unit(list(reversed(trajs)), 0.2, seed=42)
        assert len(train_a) == 80 and len(test_a) == 20
        assert [t.unit_id for t in train_a] == [t.unit_id for t in train_b]
        assert [t.unit_id for t in test_a] == [t.unit_id for t in test_b]

    def test_two_units_half(self):
        trajs = [make_trajectory(unit_id=1), make_trajectory(unit_id=2)]
        train, test = split_by_unit(trajs, 0.5, seed=0)
        assert len(train) == 1 and len(test) == 1

    def test_no_leakage(self):
        trajs = [make_trajectory(unit_id=i) for i in range(1, 31)]
        train, test = split_by_unit(trajs, 0.3, seed=7)
        assert not {t.unit_id for t in train} & {t.unit_id for t in test}

    def test_different_seeds_differ(self):
        trajs = [make_trajectory(unit_id=i) for i in range(1, 51)]
        _, test_a = split_by_unit(trajs, 0.2, seed=1)
        _, test_b = split_by_unit(trajs, 0.2, seed=2)
        assert {t.unit_id for t in test_a} != {t.unit_id for t in test_b}

    def test_empty_side_is_error(self):
        trajs = [make_trajectory(unit_id=i) for i in range(1, 4)]
        with pytest.raises(ConfigError):
            split_by_unit(trajs, 0.01, seed=0)
        with pytest.raises(ConfigError):
            split_by_unit(trajs, 0.99, seed=0)


class TestCache:
    def test_round_trip(self, tmp_path):
        from rocketphm.synth import write_train_file

        write_train_file(tmp_path / "data", "FD001", n_units=4, seed=1, min_cycles=40, max_cycles=50)
        result = ingest.ingest_dataset(tmp_path / "data", "FD001", window_length=10, seed=3)
        ingest.save_cache(result, tmp_path / "cache")
        loaded = ingest.load_cache(tmp_path / "cache")
        assert loaded.dataset_id == result.dataset_id
        assert loaded.train_units == result.train_units
        assert loaded.test_units == result.test_units
        np.testing.assert_array_equal(loaded.stats.mean, result.stats.mean)
        for unit in result.train:
            np.testing.assert_array_equal(loaded.train[unit], result.train[unit])

    def test_missing_cache_names_prior_step(self, tmp_path):
        with pytest.raises(ConfigError, match="ingest"):
            ingest.load_cache(tmp_path / "nothing")
