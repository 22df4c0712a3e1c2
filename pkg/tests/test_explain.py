import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from midemo.errors import ConfigurationError, DimensionError, SingularityError, UnknownSongError
from midemo.explain import (LinearMap, compute_effects, correlation_matrix, effects_distribution,
                            fit_ols, profile_table, report_text, select_contrast_pair,
                            song_report, write_boxplot_csv, write_effects_csv)
from midemo.ingest import EMOTIONS, MIDLEVEL_FEATURES, AnnotationTable

from oracles import brute_force_pair, normal_equations_oracle


def random_map(rng):
    return LinearMap(rng.normal(0, 0.5, (7, 8)), rng.normal(0, 0.2, 8))


class TestFitOLS:
    def test_exact_recovery(self, rng):
        x = rng.uniform(0.1, 1.0, (40, 7))
        true = random_map(rng)
        fit = fit_ols(x, true.apply(x))
        np.testing.assert_allclose(fit.weights, true.weights, atol=1e-8)
        np.testing.assert_allclose(fit.intercepts, true.intercepts, atol=1e-8)

    def test_constant_column_is_singular(self, rng):
        x = rng.uniform(0.1, 1.0, (30, 7))
        x[:, 4] = 0.5
        with pytest.raises(SingularityError) as info:
            fit_ols(x, rng.normal(size=(30, 8)))
        assert "dissonance" in info.value.columns and "intercept" in info.value.columns

    def test_collinear_features(self, rng):
        x = rng.uniform(0.1, 1.0, (30, 7))
        x[:, 1] = 2 * x[:, 0]
        with pytest.raises(SingularityError) as info:
            fit_ols(x, rng.normal(size=(30, 8)))
        assert set(info.value.columns) == {"melodiousness", "articulation"}

    def test_pseudo_inverse_fallback(self, rng):
        x = rng.uniform(0.1, 1.0, (30, 7))
        x[:, 1] = 2 * x[:, 0]
        fit = fit_ols(x, rng.normal(size=(30, 8)), allow_rank_deficient=True)
        assert np.all(np.isfinite(fit.weights))

    def test_noisy_against_normal_equations(self, rng):
        x = rng.uniform(0.1, 1.0, (50, 7))
        true = random_map(rng)
        y = true.apply(x) + rng.normal(0, 0.01, (50, 8))
        fit = fit_ols(x, y)
        w_ref, b_ref = normal_equations_oracle(x, y)
        assert np.max(np.abs(fit.weights - np.array(w_ref))) < 0.05
        np.testing.assert_allclose(fit.weights, w_ref, atol=1e-8)
        np.testing.assert_allclose(fit.intercepts, b_ref, atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(9, 80), st.integers(0, 2**32 - 1))
    def test_residuals_orthogonal(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0.1, 1.0, (n, 7))
        y = rng.uniform(0.1, 0.8, (n, 8))
        fit = fit_ols(x, y)
        a = np.hstack([x, np.ones((n, 1))])
        resid = y - fit.apply(x)
        assert np.max(np.abs(a.T @ resid)) / n < 1e-8

    def test_too_few_rows(self, rng):
        with pytest.raises(ConfigurationError):
            fit_ols(rng.uniform(size=(8, 7)), rng.uniform(size=(8, 8)))

    def test_shapes(self, rng):
        with pytest.raises(DimensionError):
            fit_ols(rng.uniform(size=(20, 6)), rng.uniform(size=(20, 8)))


class TestEffects:
    def test_single_product(self):
        w = np.zeros((7, 8))
        w[2, 5] = 0.5
        x = np.zeros((1, 7))
        x[0, 2] = 0.6
        e = compute_effects(LinearMap(w, np.zeros(8)), x)
        assert e.values[0, 2, 5] == pytest.approx(0.30, abs=1e-15)

    def test_zero_row(self, rng):
        m = random_map(rng)
        e = compute_effects(m, np.zeros((1, 7)))
        assert np.all(e.values == 0)
        np.testing.assert_array_equal(e.predictions()[0], m.intercepts)

    def test_decomposition_identity(self, rng):
        m = random_map(rng)
        x = rng.uniform(0.1, 1.0, (25, 7))
        e = compute_effects(m, x)
        direct = x @ m.weights + m.intercepts
        np.testing.assert_allclose(e.predictions(), direct, atol=1e-12)
        np.testing.assert_array_equal(e.values, m.weights[None] * x[:, :, None])

    def test_shape_check(self, rng):
        with pytest.raises(DimensionError):
            compute_effects(random_map(rng), np.zeros((3, 8)))


class TestDistribution:
    def _tensor(self, cell_values):
        v = np.zeros((len(cell_values), 7, 8))
        v[:, 0, 0] = cell_values
        m = LinearMap(np.zeros((7, 8)), np.zeros(8))
        e = compute_effects(m, np.zeros((len(cell_values), 7)))
        e.values = v
        return e

    def test_single_song(self):
        d = effects_distribution(self._tensor([0.42]))
        assert d.median[0, 0] == d.q1[0, 0] == d.q3[0, 0] == 0.42

    def test_quartiles(self):
        d = effects_distribution(self._tensor([5, 1, 4, 2, 3]))
        assert (d.median[0, 0], d.q1[0, 0], d.q3[0, 0]) == (3, 2, 4)
        assert (d.whisker_low[0, 0], d.whisker_high[0, 0]) == (1, 5)
        assert d.outliers[(0, 0)] == []

    def test_outlier(self):
        d = effects_distribution(self._tensor([1, 2, 3, 4, 5, 100]))
        assert [v for _, v in d.outliers[(0, 0)]] == [100]
        assert d.whisker_high[0, 0] == 5

    def test_all_equal(self):
        d = effects_distribution(self._tensor([0.2] * 9))
        assert d.q3[0, 0] - d.q1[0, 0] == 0
        assert d.outliers[(0, 0)] == []

    def test_ordering_invariant(self, rng):
        e = compute_effects(random_map(rng), rng.uniform(0.1, 1, (40, 7)))
        d = effects_distribution(e)
        assert np.all(d.q1 <= d.median) and np.all(d.median <= d.q3)
        assert np.all(d.whisker_low >= e.values.min(axis=0))
        assert np.all(d.whisker_high <= e.values.max(axis=0))


class TestCorrelationMatrix:
    def test_duplicated_column(self, rng):
        mid = rng.uniform(0.1, 1, (30, 7))
        emo = rng.uniform(0.1, 0.7, (30, 8))
        emo[:, 3] = mid[:, 6]
        c = correlation_matrix(mid, emo)
        assert c.values.shape == (7, 8)
        assert c.values[6, 3] == pytest.approx(1.0, abs=1e-12)

    def test_independent_columns(self):
        rng = np.random.default_rng(99)
        c = correlation_matrix(rng.normal(size=(1000, 7)), rng.normal(size=(1000, 8)))
        assert np.all(np.abs(c.values) < 0.1)

    def test_constant_column_flagged(self, rng):
        mid = rng.uniform(0.1, 1, (20, 7))
        mid[:, 2] = 0.3
        c = correlation_matrix(mid, rng.uniform(size=(20, 8)))
        assert c.degenerate[2].all() and not c.degenerate[[0, 1, 3, 4, 5, 6]].any()
        assert np.isnan(c.values[2]).all()

    def test_sign_can_differ_from_weights(self, rng):
        # Second feature is a noisy copy of the first; emotion depends on their difference.
        n = 200
        base = rng.uniform(0.1, 1, n)
        mid = rng.uniform(0.1, 1, (n, 7))
        mid[:, 0] = base
        mid[:, 1] = base + rng.normal(0, 0.05, n)
        emo = np.tile(0.4, (n, 8)) + rng.normal(0, 0.01, (n, 8))
        emo[:, 0] = 2 * mid[:, 0] - 1.2 * mid[:, 1] + rng.normal(0, 0.01, n)
        corr = correlation_matrix(mid, emo).values
        w = fit_ols(mid, emo).weights
        assert corr[1, 0] > 0 and w[1, 0] < 0


class TestContrastPair:
    def test_two_songs(self, rng):
        for mode in ("paper", "intent"):
            p = select_contrast_pair(rng.uniform(size=(2, 8)), rng.uniform(size=(2, 7)), mode)
            assert (p.i, p.j) == (0, 1)

    def test_three_songs_by_hand(self):
        emo = np.array([[0.5] * 8, [0.52] * 8, [0.1] * 8])
        mid = np.array([[0.1] * 7, [0.9] * 7, [0.5] * 7])
        for mode in ("paper", "intent"):
            p = select_contrast_pair(emo, mid, mode, song_ids=("a", "b", "c"))
            (i, j), score = brute_force_pair(emo.tolist(), mid.tolist(), mode)
            assert (p.i, p.j) == (i, j)
            assert p.score == pytest.approx(score, abs=1e-12)
        assert select_contrast_pair(emo, mid, "intent").song_ids == ("0", "1")

    def test_identical_songs(self):
        p = select_contrast_pair(np.ones((5, 8)), np.ones((5, 7)))
        assert (p.i, p.j) == (0, 1) and p.degenerate

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 50), st.integers(0, 2**32 - 1), st.sampled_from(["paper", "intent"]))
    def test_matches_enumeration(self, n, seed, mode):
        rng = np.random.default_rng(seed)
        emo, mid = rng.uniform(0.1, 0.8, (n, 8)), rng.uniform(0.1, 1, (n, 7))
        p = select_contrast_pair(emo, mid, mode)
        (i, j), score = brute_force_pair(emo.tolist(), mid.tolist(), mode)
        assert p.score == pytest.approx(score, abs=1e-12)
        assert (p.i, p.j) == (i, j)
        assert p.d_comb == pytest.approx(p.d_e_scaled - (1 - p.d_mid_scaled), abs=1e-15)
        assert 0 <= p.d_e_scaled <= 1 and 0 <= p.d_mid_scaled <= 1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 40), st.integers(0, 2**32 - 1), st.floats(0.01, 100))
    def test_scale_invariance(self, n, seed, c):
        rng = np.random.default_rng(seed)
        emo, mid = rng.uniform(0.1, 0.8, (n, 8)), rng.uniform(0.1, 1, (n, 7))
        for mode in ("paper", "intent"):
            a = select_contrast_pair(emo, mid, mode)
            b = select_contrast_pair(emo * c, mid, mode)
            assert (a.i, a.j) == (b.i, b.j)

    def test_errors(self):
        with pytest.raises(ConfigurationError):
            select_contrast_pair(np.ones((1, 8)), np.ones((1, 7)))
        with pytest.raises(ConfigurationError):
            select_contrast_pair(np.ones((3, 8)), np.ones((3, 7)), "other")


class TestSongReport:
    def _setup(self, rng):
        ids = ("153", "322", "7")
        x = rng.uniform(0.1, 1, (3, 7))
        m = random_map(rng)
        ann = AnnotationTable(ids, "emotion", rng.uniform(0.1, 0.78, (3, 8)))
        return ids, x, m, compute_effects(m, x, ids, {"features": "annotations"}), ann

    def test_decomposition(self, rng):
        ids, x, m, e, ann = self._setup(rng)
        rep = song_report("322", e, m, ann)
        pred = m.apply(x[1])
        for k, row in enumerate(rep["emotions"]):
            assert row["predicted"] == pytest.approx(pred[k], abs=1e-9)
            assert row["predicted"] == pytest.approx(
                row["intercept"] + sum(row["effects"].values()), abs=1e-9)
            assert row["annotated"] == pytest.approx(ann.row("322")[k])
            assert len(row["top_positive"]) <= 3 and len(row["top_negative"]) <= 3
            assert all(v > 0 for _, v in row["top_positive"])
        assert [r["emotion"] for r in rep["emotions"]] == list(EMOTIONS)

    def test_profile_layout(self, rng):
        ids, x, m, e, ann = self._setup(rng)
        table = profile_table([song_report(s, e, m, ann) for s in ("153", "322")])
        head = table.splitlines()[0].split()
        assert head == ["pred", "153", "pred", "322", "ann", "153", "ann", "322"]
        assert "song 153" in report_text(song_report("153", e, m, ann))

    def test_zero_weights(self, rng):
        m = LinearMap(np.zeros((7, 8)), np.linspace(0.2, 0.5, 8))
        e = compute_effects(m, rng.uniform(size=(2, 7)), ("a", "b"))
        rep = song_report("a", e, m)
        for k, row in enumerate(rep["emotions"]):
            assert row["top_positive"] == [] and row["top_negative"] == []
            assert row["predicted"] == pytest.approx(m.intercepts[k])
            assert row["annotated"] is None

    def test_unknown_song(self, rng):
        ids, x, m, e, ann = self._setup(rng)
        with pytest.raises(UnknownSongError):
            song_report("999", e, m, ann)


def test_exports(tmp_path, rng):
    m = random_map(rng)
    e = compute_effects(m, rng.uniform(size=(4, 7)), ("a", "b", "c", "d"))
    write_effects_csv(tmp_path / "e.csv", e)
    rows = list(csv.reader(open(tmp_path / "e.csv")))
    assert rows[0] == ["song_id", "feature", "emotion", "effect"]
    assert len(rows) == 1 + 4 * 7 * 8
    assert float(rows[1][3]) == e.values[0, 0, 0]
    write_boxplot_csv(tmp_path / "b.csv", effects_distribution(e))
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert len(rows) == 1 + 56
    assert rows[1][:2] == [MIDLEVEL_FEATURES[0], EMOTIONS[0]]
