import math
from fractions import Fraction

import numpy as np
import pytest

from greedvmaf.evaluate import (
    DatasetManifest,
    ManifestRow,
    SplitSpec,
    all_content_splits,
    correlations,
    logistic,
    logistic_fit,
    psnr,
    run_all_splits,
    run_experiment,
    split_by_content,
)
from greedvmaf.video import VideoSequence


def manifest_of(n_contents, per_content, mos_fn=None):
    rows = []
    for c in range(n_contents):
        for v in range(per_content):
            mos = mos_fn(c, v) if mos_fn else 50.0 + v
            rows.append(
                ManifestRow(
                    content_id=f"c{c}",
                    mos=mos,
                    fps_ref=Fraction(120),
                    fps_dist=Fraction([24, 30, 60, 120][v % 4]),
                )
            )
    return DatasetManifest(tuple(rows))


def synthetic_features(manifest, seed=0, noise=0.05):
    """Features driven by a per-row distortion strength; MOS must follow it."""
    rng = np.random.default_rng(seed)
    offsets = {c: rng.normal(0.0, 0.3, 21) for c in manifest.contents}
    X = []
    for row in manifest.rows:
        strength = (100.0 - row.mos) / 100.0
        X.append(
            offsets[row.content_id]
            + np.linspace(0.5, 2.0, 21) * strength
            + rng.normal(0.0, noise, 21)
        )
    return np.asarray(X)


class TestSplits:
    def test_ten_contents_largest_remainder(self):
        manifest = manifest_of(10, 4)
        spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=1, iterations=1)
        split = split_by_content(manifest, spec, 0)
        sizes = tuple(
            len({manifest.rows[i].content_id for i in group})
            for group in (split.train, split.val, split.test)
        )
        assert sizes in ((7, 1, 2), (7, 2, 1))

    def test_two_contents_minimal(self):
        manifest = manifest_of(2, 3)
        spec = SplitSpec(fractions=(0.8, 0.2), seed=0, iterations=1)
        split = split_by_content(manifest, spec, 0)
        assert len(split.train) == 3 and len(split.test) == 3
        assert not split.val

    def test_reproducible_and_iteration_dependent(self):
        manifest = manifest_of(8, 2)
        spec = SplitSpec(seed=42, iterations=5)
        assert split_by_content(manifest, spec, 3) == split_by_content(manifest, spec, 3)
        assert split_by_content(manifest, spec, 3) != split_by_content(manifest, spec, 4)

    def test_content_disjointness_every_split(self):
        manifest = manifest_of(9, 5)
        spec = SplitSpec(seed=7, iterations=25)
        for it in range(25):
            split = split_by_content(manifest, spec, it)
            groups = [
                {manifest.rows[i].content_id for i in g}
                for g in (split.train, split.val, split.test)
            ]
            assert not (groups[0] & groups[1])
            assert not (groups[0] & groups[2])
            assert not (groups[1] & groups[2])
            assert len(split.train) + len(split.val) + len(split.test) == len(manifest)

    def test_too_few_contents(self):
        manifest = manifest_of(2, 2)
        with pytest.raises(ValueError, match="contents"):
            split_by_content(manifest, SplitSpec(seed=0, iterations=1), 0)


class TestAllContentSplits:
    def test_choose_four_of_five(self):
        assert len(all_content_splits(manifest_of(5, 2), 0.8)) == 5

    def test_choose_eight_of_ten(self):
        assert len(all_content_splits(manifest_of(10, 2), 0.8)) == 45

    def test_single_content_error(self):
        with pytest.raises(ValueError):
            all_content_splits(manifest_of(1, 4), 0.8)

    def test_splits_are_exhaustive_and_disjoint(self):
        manifest = manifest_of(6, 2)
        splits = all_content_splits(manifest, 0.8)  # C(6,5) = 6
        assert len(splits) == 6
        test_sets = set()
        for split in splits:
            contents = frozenset(manifest.rows[i].content_id for i in split.test)
            assert len(contents) == 1
            test_sets.add(contents)
        assert len(test_sets) == 6


class TestLogistic:
    def test_self_consistency_recovery(self):
        x = np.linspace(0.0, 100.0, 60)
        y = logistic(x, 100.0, 0.0, 50.0, 10.0)
        fit = logistic_fit(x, y)
        assert math.sqrt(fit.sse / x.size) < 1e-6

    def test_midpoint_symmetry(self):
        assert logistic(50.0, 100.0, 0.0, 50.0, 10.0) == pytest.approx(50.0)
        assert logistic(50.0, 80.0, 20.0, 50.0, 7.0) == pytest.approx(50.0)

    def test_fitted_curve_is_monotone(self):
        rng = np.random.default_rng(90)
        x = rng.uniform(0, 10, 40)
        y = 3.0 * x + rng.normal(0, 2.0, 40)
        fit = logistic_fit(x, y)
        grid = np.linspace(x.min(), x.max(), 200)
        diffs = np.diff(fit(grid))
        assert np.all(diffs >= -1e-9) or np.all(diffs <= 1e-9)

    def test_requires_five_points_and_spread(self):
        with pytest.raises(ValueError, match="5 points"):
            logistic_fit([1, 2, 3, 4], [1, 2, 3, 4])
        with pytest.raises(ValueError, match="constant"):
            logistic_fit([1, 1, 1, 1, 1], [1, 2, 3, 4, 5])

    def test_mapped_plcc_at_least_linear(self):
        from scipy.stats import pearsonr

        rng = np.random.default_rng(91)
        for _ in range(10):
            pred = rng.normal(size=60)
            mos = 2.0 * pred + rng.normal(0, 1.0, 60)
            raw = pearsonr(pred, mos).statistic
            mapped = pearsonr(logistic_fit(pred, mos).mapped, mos).statistic
            assert mapped >= raw - 1e-9


class TestCorrelations:
    def test_monotone(self):
        c = correlations([1, 2, 3], [10, 20, 30])
        assert c["srocc"] == pytest.approx(1.0)
        assert c["krocc"] == pytest.approx(1.0)

    def test_antitone(self):
        assert correlations([1, 2, 3], [30, 20, 10])["srocc"] == pytest.approx(-1.0)

    def test_tie_handling_average_ranks(self):
        c = correlations([1, 2, 2, 3], [1, 2, 3, 4])
        assert c["srocc"] == pytest.approx(0.9487, abs=1e-4)

    def test_invariant_to_increasing_transform(self):
        rng = np.random.default_rng(92)
        pred = rng.normal(size=30)
        mos = rng.normal(size=30)
        a = correlations(pred, mos)
        b = correlations(np.exp(pred), mos)
        assert a["srocc"] == pytest.approx(b["srocc"], abs=1e-12)
        assert a["krocc"] == pytest.approx(b["krocc"], abs=1e-12)

    def test_constant_inputs_error(self):
        with pytest.raises(ValueError, match="constant"):
            correlations([1.0, 1.0, 1.0], [1, 2, 3])
        with pytest.raises(ValueError, match="constant"):
            correlations([1, 2, 3], [5.0, 5.0, 5.0])

    def test_length_checks(self):
        with pytest.raises(ValueError):
            correlations([1.0], [2.0])
        with pytest.raises(ValueError):
            correlations([1, 2, 3], [1, 2])


class TestPsnr:
    def test_identical_is_infinite(self):
        v = VideoSequence(np.full((2, 4, 4), 10.0), Fraction(30))
        assert math.isinf(psnr(v, v))

    def test_constant_offset(self):
        a = VideoSequence(np.full((3, 8, 8), 100.0), Fraction(30))
        b = VideoSequence(np.full((3, 8, 8), 116.0), Fraction(30))
        assert psnr(a, b) == pytest.approx(10.0 * math.log10(255.0**2 / 256.0), abs=1e-9)

    def test_inverted_checkerboard_is_zero_db(self):
        half = np.zeros((1, 4, 4))
        half[:, :, :2] = 255.0
        a = VideoSequence(half, Fraction(30))
        b = VideoSequence(255.0 - half, Fraction(30))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)


class TestRunExperiment:
    def test_linear_target_reaches_perfect_rank(self):
        manifest = manifest_of(8, 6, mos_fn=lambda c, v: 30.0 + 10.0 * v)
        features = synthetic_features(manifest, noise=0.0)
        spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=5, iterations=8)
        report = run_experiment(manifest, features, spec, kernel="linear")
        assert report.medians["srocc"] == pytest.approx(1.0)
        assert report.n_skipped == 0

    def test_single_iteration_report_matches_iteration(self):
        manifest = manifest_of(8, 6, mos_fn=lambda c, v: 30.0 + 10.0 * v)
        features = synthetic_features(manifest)
        spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=3, iterations=1)
        report = run_experiment(manifest, features, spec)
        assert len(report.iterations) == 1
        assert report.medians == report.iterations[0].metrics

    def test_by_fps_partition_is_exhaustive(self):
        manifest = manifest_of(10, 8, mos_fn=lambda c, v: 20.0 + 8.0 * v)
        features = synthetic_features(manifest)
        spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=11, iterations=3)
        report = run_experiment(manifest, features, spec, by_fps=True)
        for it in report.iterations:
            if it.skipped:
                continue
            assert sum(g["size"] for g in it.by_fps.values()) == it.test_size

    def test_median_invariant_to_iteration_order(self):
        manifest = manifest_of(8, 6, mos_fn=lambda c, v: 30.0 + 10.0 * v + c)
        features = synthetic_features(manifest, noise=0.2)
        spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=13, iterations=6)
        report = run_experiment(manifest, features, spec)
        values = [it.metrics["srocc"] for it in report.iterations if not it.skipped]
        assert report.medians["srocc"] == pytest.approx(np.median(values))
        assert report.medians["srocc"] == pytest.approx(
            np.median(list(reversed(values)))
        )

    def test_two_way_split_uses_fixed_hyperparams(self):
        manifest = manifest_of(6, 6, mos_fn=lambda c, v: 30.0 + 10.0 * v)
        features = synthetic_features(manifest)
        spec = SplitSpec(fractions=(0.8, 0.2), seed=17, iterations=4)
        report = run_experiment(manifest, features, spec, kernel="linear")
        for it in report.iterations:
            if not it.skipped:
                assert it.hyperparams == report.iterations[0].hyperparams

    def test_all_splits_protocol(self):
        manifest = manifest_of(5, 6, mos_fn=lambda c, v: 30.0 + 10.0 * v)
        features = synthetic_features(manifest)
        report = run_all_splits(manifest, features, train_fraction=0.8, kernel="rbf")
        assert len(report.iterations) == 5  # C(5,4)
        assert report.medians["srocc"] > 0.7

    def test_full_reproducibility(self):
        manifest = manifest_of(8, 6, mos_fn=lambda c, v: 30.0 + 10.0 * v + c)
        features = synthetic_features(manifest, noise=0.1)
        spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=23, iterations=5)
        a = run_experiment(manifest, features, spec, by_fps=True).to_dict()
        b = run_experiment(manifest, features, spec, by_fps=True).to_dict()
        assert a == b

    def test_parallel_iterations_match_sequential(self):
        manifest = manifest_of(8, 6, mos_fn=lambda c, v: 30.0 + 10.0 * v + c)
        features = synthetic_features(manifest, noise=0.1)
        spec = SplitSpec(fractions=(0.7, 0.15, 0.15), seed=31, iterations=4)
        seq = run_experiment(manifest, features, spec, jobs=1).to_dict()
        par = run_experiment(manifest, features, spec, jobs=2).to_dict()
        assert seq == par

    def test_degenerate_iterations_are_skipped_and_counted(self):
        manifest = manifest_of(4, 4, mos_fn=lambda c, v: 10.0 * c)  # constant per content
        features = synthetic_features(manifest, noise=0.3)
        spec = SplitSpec(fractions=(0.5, 0.25, 0.25), seed=29, iterations=4)
        report = run_experiment(manifest, features, spec)
        skipped = [it for it in report.iterations if it.skipped]
        assert len(skipped) == report.n_skipped
        for it in skipped:
            assert it.skip_reason
