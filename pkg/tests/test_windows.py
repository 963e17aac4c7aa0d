import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wortsense.errors import ValidationError
from wortsense.sim import NoiseLevels, ProcessConfig, simulate_process
from wortsense.targets import TargetCurve, build_target_curve
from wortsense.windows import (
    BASE5,
    EXTENDED7,
    FEATURES_BASE5,
    FEATURES_EXTENDED7,
    DataFrameWindow,
    NormStats,
    WindowBatch,
    WindowNormalizer,
    apply_normalizer,
    build_windows,
    feature_names,
    fit_normalizer,
    load_frames,
    save_frames,
    split_runs,
    stack_windows,
    variant_for,
    window_count,
)


def brute_force_window_count(duration, windowsize, overlap):
    """Independent oracle: enumerate start positions one by one."""
    count = 0
    start = 0
    while start + windowsize <= duration:
        count += 1
        start += overlap
    return count


def make_run(duration=300, seed=0, **kwargs):
    kwargs.setdefault("noise_sd", NoiseLevels.zero())
    config = ProcessConfig(duration_steps=duration, rng_seed=seed, **kwargs)
    return simulate_process(config, run_id=f"run-{seed}")


def run_and_target(duration=300, seed=0, **kwargs):
    run = make_run(duration, seed, **kwargs)
    return run, build_target_curve(run.probes, run.duration_steps)


class TestWindowCount:
    def test_paper_scale(self):
        assert window_count(10000, 100, 7) == 1415

    def test_thirty_one_runs_scale(self):
        assert 31 * window_count(10000, 100, 7) == 43865

    def test_single_window(self):
        assert window_count(100, 100, 7) == 1
        assert window_count(100, 100, 9999) == 1

    def test_huge_overlap(self):
        assert window_count(10000, 100, 9900) == 2

    def test_too_short(self):
        with pytest.raises(ValidationError):
            window_count(99, 100, 7)

    @settings(max_examples=100, deadline=None)
    @given(
        duration=st.integers(min_value=1, max_value=500),
        windowsize=st.integers(min_value=1, max_value=500),
        overlap=st.integers(min_value=1, max_value=80),
    )
    def test_matches_brute_force(self, duration, windowsize, overlap):
        if duration < windowsize:
            with pytest.raises(ValidationError):
                window_count(duration, windowsize, overlap)
        else:
            assert window_count(duration, windowsize, overlap) == \
                brute_force_window_count(duration, windowsize, overlap)


class TestBuildWindows:
    def test_count_and_starts(self):
        run, target = run_and_target(300)
        windows = build_windows(run, target, 100, 7)
        assert len(windows) == window_count(300, 100, 7)
        assert [w.start_step for w in windows] == list(range(0, 201, 7))

    def test_rows_are_consecutive_steps(self):
        run, target = run_and_target(150)
        windows = build_windows(run, target, 40, 13)
        names = feature_names(BASE5)
        step_col = names.index("step")
        for w in windows:
            assert np.array_equal(
                w.features[:, step_col],
                np.arange(w.start_step, w.start_step + 40, dtype=np.float64),
            )

    def test_target_is_last_step_value(self):
        run, target = run_and_target(150)
        for w in build_windows(run, target, 40, 13):
            assert w.target == target.plato[w.start_step + 39]

    def test_feature_columns_match_run(self):
        run, target = run_and_target(160)
        w = build_windows(run, target, 50, 7)[2]
        s = w.start_step
        assert np.array_equal(w.features[:, 0], run.pressure_mbar[s:s + 50])
        assert np.array_equal(w.features[:, 2], run.ambient_temp_c[s:s + 50])
        assert np.array_equal(w.features[:, 3], run.wort_temp_c[s:s + 50])

    def test_probe_count_column(self):
        run, target = run_and_target(
            300, probe_schedule=[(0, "refractometer"), (120, "spindle"),
                                 (299, "refractometer")],
        )
        windows = build_windows(run, target, 100, 50)
        counts = windows[0].features[:, 4]
        assert np.all(counts == 0.0)
        late = windows[-1].features[:, 4]
        assert late[-1] == 1.0

    def test_extended7_constant_columns(self):
        run, target = run_and_target(200)
        for w in build_windows(run, target, 80, 31, EXTENDED7):
            assert np.all(w.features[:, 5] == run.initial_pressure_mbar)
            assert np.all(w.features[:, 6] == run.initial_plato)

    def test_single_window_boundary(self):
        run, target = run_and_target(100)
        windows = build_windows(run, target, 100, 17)
        assert len(windows) == 1
        assert windows[0].start_step == 0

    def test_run_shorter_than_window(self):
        run, target = run_and_target(99)
        with pytest.raises(ValidationError):
            build_windows(run, target, 100, 7)

    def test_unknown_feature_set(self):
        run, target = run_and_target(120)
        with pytest.raises(ValidationError):
            build_windows(run, target, 50, 7, "base6")

    def test_target_length_mismatch(self):
        run, _ = run_and_target(120)
        with pytest.raises(ValidationError):
            build_windows(run, TargetCurve(np.zeros(60)), 50, 7)


def toy_windows():
    f1 = np.array([[1.0, 2.0], [3.0, 4.0]])
    f2 = np.array([[5.0, 6.0], [7.0, 8.0]])
    return [
        DataFrameWindow(f1, 1.0, "a", 0),
        DataFrameWindow(f2, 2.0, "a", 5),
    ]


class TestNormalizer:
    def test_hand_computed_stats(self):
        stats = fit_normalizer(toy_windows())
        # feature 0 rows: 1,3,5,7 ; feature 1 rows: 2,4,6,8
        assert stats.mean == pytest.approx([4.0, 5.0])
        assert stats.sd == pytest.approx([np.std([1, 3, 5, 7]), np.std([2, 4, 6, 8])])

    def test_constant_column_floor(self):
        w = DataFrameWindow(np.full((3, 2), 7.0), 0.0, "a", 0)
        stats = fit_normalizer([w])
        assert stats.mean == pytest.approx([7.0, 7.0])
        assert np.all(stats.sd == 1e-8)

    def test_single_window_of_zeros(self):
        w = DataFrameWindow(np.zeros((4, 3)), 0.0, "a", 0)
        stats = fit_normalizer([w])
        assert np.all(stats.mean == 0.0)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            fit_normalizer([])

    def test_zscore_property(self):
        windows = toy_windows()
        stats = fit_normalizer(windows)
        batch = apply_normalizer(windows, stats, ("f0", "f1"))
        flat = batch.features.reshape(-1, 2)
        assert np.allclose(flat.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(flat.std(axis=0), 1.0, atol=1e-12)

    def test_identity_stats(self):
        windows = toy_windows()
        stats = NormStats(np.zeros(2), np.ones(2))
        batch = apply_normalizer(windows, stats, ("f0", "f1"))
        assert np.array_equal(batch.features[0], windows[0].features)

    def test_targets_left_raw(self):
        windows = toy_windows()
        batch = apply_normalizer(windows, fit_normalizer(windows), ("f0", "f1"))
        assert np.array_equal(batch.targets, [1.0, 2.0])

    def test_no_stat_recomputation_on_test_windows(self):
        train = toy_windows()
        stats = fit_normalizer(train)
        frozen = (stats.mean.tobytes(), stats.sd.tobytes())
        test = [DataFrameWindow(np.full((2, 2), 100.0), 9.0, "b", 0)]
        apply_normalizer(test, stats, ("f0", "f1"))
        assert (stats.mean.tobytes(), stats.sd.tobytes()) == frozen

    def test_feature_count_mismatch(self):
        stats = fit_normalizer(toy_windows())
        bad = [DataFrameWindow(np.zeros((2, 3)), 0.0, "a", 0)]
        with pytest.raises(ValidationError):
            apply_normalizer(bad, stats, ("f0", "f1", "f2"))

    def test_sklearn_surface(self):
        from sklearn.base import clone

        X = np.stack([w.features for w in toy_windows()])
        norm = WindowNormalizer()
        assert clone(norm).get_params()["sd_floor"] == 1e-8
        out = norm.fit_transform(X)
        assert out.shape == X.shape
        with pytest.raises(ValidationError):
            norm.transform(np.zeros((1, 2, 5)))

    def test_transform_before_fit(self):
        with pytest.raises(ValidationError):
            WindowNormalizer().transform(np.zeros((1, 2, 2)))


class TestSplitRuns:
    def test_paper_counts(self):
        runs = [f"run{i:02d}" for i in range(31)]
        train, val, test = split_runs(runs, 24, 4, 3, seed=7)
        assert len(train) == 24 and len(val) == 4 and len(test) == 3
        assert set(train) | set(val) | set(test) == set(runs)
        assert not (set(train) & set(val)) and not (set(val) & set(test))
        assert not (set(train) & set(test))

    def test_two_runs(self):
        train, val, test = split_runs(["a", "b"], 1, 0, 1, seed=0)
        assert len(train) == 1 and len(val) == 0 and len(test) == 1
        assert set(train) != set(test)

    def test_deterministic(self):
        runs = [f"r{i}" for i in range(10)]
        assert split_runs(runs, 6, 2, 2, seed=3) == split_runs(runs, 6, 2, 2, seed=3)

    def test_count_mismatch(self):
        with pytest.raises(ValidationError):
            split_runs(["a", "b", "c"], 2, 2, 0, seed=0)

    def test_accepts_process_runs(self):
        runs = [make_run(120, seed) for seed in (0, 1)]
        train, _, test = split_runs(runs, 1, 0, 1, seed=1)
        assert {*train, *test} == {"run-0", "run-1"}

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError):
            split_runs(["a", "a"], 1, 1, 0, seed=0)


class TestFramesFile:
    def test_round_trip(self, tmp_path):
        run, target = run_and_target(260, seed=3)
        windows = build_windows(run, target, 100, 20)
        stats = fit_normalizer(windows[:4])
        partitions = {
            "train": apply_normalizer(windows[:4], stats, FEATURES_BASE5),
            "val": apply_normalizer(windows[4:6], stats, FEATURES_BASE5),
            "test": apply_normalizer(windows[6:], stats, FEATURES_BASE5),
        }
        path = tmp_path / "frames.bin"
        save_frames(path, partitions, overlap=20)
        loaded = load_frames(path)
        assert loaded.windowsize == 100
        assert loaded.overlap == 20
        assert loaded.feature_names == FEATURES_BASE5
        for name, batch in partitions.items():
            got = loaded.partitions[name]
            assert np.array_equal(got.features, batch.features)
            assert np.array_equal(got.targets, batch.targets)
            assert np.array_equal(got.start_steps, batch.start_steps)
            assert got.run_ids == batch.run_ids
            assert got.norm_stats == batch.norm_stats

    def test_rejects_unnormalized(self, tmp_path):
        run, target = run_and_target(120, seed=3)
        windows = build_windows(run, target, 100, 20)
        feats, targets, ids, starts = stack_windows(windows)
        raw = WindowBatch(feats, targets, ids, starts, FEATURES_BASE5, None)
        with pytest.raises(ValidationError):
            save_frames(tmp_path / "x.bin", {"train": raw})

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bogus.bin"
        path.write_bytes(b"NOTAFRAME" + b"\x00" * 32)
        with pytest.raises(ValidationError):
            load_frames(path)

    def test_rejects_truncation(self, tmp_path):
        run, target = run_and_target(260, seed=3)
        windows = build_windows(run, target, 100, 20)
        stats = fit_normalizer(windows)
        save_frames(tmp_path / "f.bin",
                    {"train": apply_normalizer(windows, stats, FEATURES_BASE5)})
        blob = (tmp_path / "f.bin").read_bytes()
        (tmp_path / "cut.bin").write_bytes(blob[:-16])
        with pytest.raises(ValidationError):
            load_frames(tmp_path / "cut.bin")


class TestVariants:
    def test_names(self):
        assert feature_names(BASE5) == FEATURES_BASE5
        assert feature_names(EXTENDED7) == FEATURES_EXTENDED7
        assert variant_for(FEATURES_EXTENDED7) == EXTENDED7

    def test_unknown(self):
        with pytest.raises(ValidationError):
            variant_for(("a", "b"))
