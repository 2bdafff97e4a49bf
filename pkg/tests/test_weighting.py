"""Weight combinators and adaptive EMA smoothing."""

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from btwmoe.errors import InvalidInputError, ShapeError
from btwmoe.predictions import PredictionSet
from btwmoe.weighting import (
    SmoothingState,
    combine_bilevel,
    combine_global_kl,
    combine_global_mi,
    combine_local,
    instance_kl_weights,
    smooth_update,
    validate_weight_matrix,
    write_alpha_trajectory_csv,
    write_weight_trajectory_csv,
)

raw_matrices = hnp.arrays(
    dtype=np.float64,
    shape=st.tuples(st.integers(1, 8), st.integers(2, 5)),
    elements=st.floats(0, 50),
)


class TestInstanceKlWeights:
    def test_regression_row_matches_scalar_kl(self):
        preds = PredictionSet(
            task="regression",
            targets=np.zeros(1),
            uni_mean=np.array([[0.0], [1.0]]),
            uni_var=np.array([[1.0], [4.0]]),
            multi_mean=np.array([1.0]),
            multi_var=np.array([4.0]),
        )
        raw = instance_kl_weights(preds)
        np.testing.assert_allclose(raw, [[0.4431471806, 0.0]], atol=1e-9)

    def test_classification_identical_predictions_give_zero_matrix(self):
        probs = np.full((2, 3, 4), 0.25)
        preds = PredictionSet(
            task="classification",
            targets=np.zeros(3, dtype=np.int64),
            uni_probs=probs,
            multi_probs=np.full((3, 4), 0.25),
        )
        assert np.all(instance_kl_weights(preds) == 0.0)

    def test_classification_row_matches_scalar_kl(self):
        uni = np.array([[[1.0, 0.0]], [[0.5, 0.5]]])
        preds = PredictionSet(
            task="classification",
            targets=np.zeros(1, dtype=np.int64),
            uni_probs=uni,
            multi_probs=np.array([[0.5, 0.5]]),
        )
        raw = instance_kl_weights(preds)
        np.testing.assert_allclose(raw, [[np.log(2), 0.0]], atol=1e-9)


class TestCombinators:
    def test_local_normalizes_rows(self):
        np.testing.assert_allclose(
            combine_local(np.array([[2.0, 3.0, 5.0]])), [[0.2, 0.3, 0.5]]
        )
        np.testing.assert_allclose(
            combine_local(np.array([[0.4431471806, 0.0]])), [[1.0, 0.0]]
        )

    def test_local_uniform_fallback_for_zero_row(self):
        np.testing.assert_allclose(
            combine_local(np.zeros((1, 3))), [[1 / 3, 1 / 3, 1 / 3]]
        )

    def test_bilevel_rescales_by_mi(self):
        w = combine_bilevel(np.array([[0.5, 0.5]]), np.array([0.8, 0.2]))
        np.testing.assert_allclose(w, [[0.8, 0.2]])

    def test_bilevel_with_uniform_mi_equals_local_bitwise(self):
        rng = np.random.default_rng(3)
        raw = rng.uniform(0, 5, size=(20, 3))
        mi = np.ones(3)
        assert np.array_equal(combine_bilevel(raw, mi), combine_local(raw))

    def test_bilevel_zero_mi_falls_back_to_uniform(self):
        w = combine_bilevel(np.array([[1.0, 1.0]]), np.array([0.0, 0.0]))
        np.testing.assert_allclose(w, [[0.5, 0.5]])

    def test_bilevel_shape_mismatch(self):
        with pytest.raises(ShapeError):
            combine_bilevel(np.ones((2, 3)), np.ones(2))

    def test_bilevel_prenormalize_flag_is_value_equivalent(self):
        # Normalizing the raw rows first cancels in the final ratio, so the
        # two readings agree up to float rounding on non-degenerate rows.
        rng = np.random.default_rng(8)
        raw = rng.uniform(0.05, 5.0, size=(12, 4))
        mi = rng.uniform(0.1, 2.0, size=4)
        np.testing.assert_allclose(
            combine_bilevel(raw, mi, prenormalize=True),
            combine_bilevel(raw, mi, prenormalize=False),
            atol=1e-12,
        )

    def test_global_kl_uses_column_means(self):
        raw = np.array([[1.0, 3.0], [3.0, 1.0]])
        np.testing.assert_allclose(combine_global_kl(raw), [[0.5, 0.5], [0.5, 0.5]])

    def test_global_kl_single_informative_column(self):
        raw = np.array([[2.0, 0.0], [7.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(combine_global_kl(raw), np.tile([1.0, 0.0], (3, 1)))

    def test_global_kl_single_row_equals_local(self):
        raw = np.array([[0.2, 0.5, 0.3]])
        np.testing.assert_allclose(combine_global_kl(raw), combine_local(raw))

    def test_global_mi_tiles_normalized_vector(self):
        w = combine_global_mi(np.array([0.6, 0.2, 0.2]), n=4)
        np.testing.assert_allclose(w, np.tile([0.6, 0.2, 0.2], (4, 1)))
        np.testing.assert_allclose(
            combine_global_mi(np.array([1.0, 3.0]), n=1), [[0.25, 0.75]]
        )

    def test_global_mi_zero_fallback(self):
        np.testing.assert_allclose(
            combine_global_mi(np.zeros(2), n=2), np.full((2, 2), 0.5)
        )

    def test_global_mi_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            combine_global_mi(np.array([1.0, 2.0]), n=0)

    @given(raw=raw_matrices)
    @settings(max_examples=150, deadline=None)
    def test_all_combinators_are_row_stochastic(self, raw):
        mi = np.linspace(0.1, 1.0, raw.shape[1])
        for w in (
            combine_local(raw),
            combine_bilevel(raw, mi),
            combine_global_kl(raw),
            combine_global_mi(mi, raw.shape[0]),
        ):
            validate_weight_matrix(w)

    def test_scale_invariance(self):
        rng = np.random.default_rng(5)
        raw = rng.uniform(0.1, 4.0, size=(6, 3))
        scaled = raw.copy()
        scaled[2] *= 17.5
        np.testing.assert_allclose(
            combine_local(raw)[2], combine_local(scaled)[2], atol=1e-12
        )
        mi = rng.uniform(0.1, 1.0, size=3)
        np.testing.assert_allclose(
            combine_bilevel(raw, mi), combine_bilevel(raw, 3.7 * mi), atol=1e-12
        )

    def test_global_kl_on_identical_rows_equals_local(self):
        row = np.array([0.1, 0.6, 0.3])
        raw = np.tile(row, (5, 1))
        np.testing.assert_allclose(combine_global_kl(raw), combine_local(raw), atol=1e-12)


class TestSmoothing:
    def test_convex_combination(self):
        state = SmoothingState(alpha=0.5, prev_weights=np.array([[0.4, 0.6]]), prev_metric=None)
        smoothed, _ = smooth_update(state, np.array([[0.8, 0.2]]), current_metric=1.0)
        np.testing.assert_allclose(smoothed, [[0.6, 0.4]])

    def test_first_update_passes_through(self):
        state = SmoothingState()
        new = np.array([[0.7, 0.3]])
        smoothed, next_state = smooth_update(state, new, current_metric=0.5)
        np.testing.assert_array_equal(smoothed, new)
        assert next_state.alpha == state.alpha
        assert next_state.prev_metric == 0.5
        assert next_state.epoch == 1

    def test_alpha_clamps_at_bounds(self):
        state = SmoothingState(alpha=0.9, prev_weights=np.array([[1.0, 0.0]]), prev_metric=2.0)
        _, next_state = smooth_update(state, np.array([[1.0, 0.0]]), current_metric=1.0)
        assert next_state.alpha == 0.9  # improving at the ceiling stays put

        state = SmoothingState(alpha=0.1, prev_weights=np.array([[1.0, 0.0]]), prev_metric=1.0)
        _, next_state = smooth_update(state, np.array([[1.0, 0.0]]), current_metric=2.0)
        assert next_state.alpha == 0.1

    def test_alpha_moves_by_exact_steps(self):
        state = SmoothingState(prev_weights=np.array([[0.5, 0.5]]), prev_metric=1.0)
        metrics = [0.9, 0.95, 0.8, 0.7, 0.99, 0.5]
        alphas = [state.alpha]
        for metric in metrics:
            _, state = smooth_update(state, np.array([[0.5, 0.5]]), metric)
            alphas.append(state.alpha)
        diffs = np.diff(alphas)
        for d in diffs:
            assert min(abs(d), abs(d - 0.1), abs(d + 0.1)) < 1e-12
        assert all(0.1 <= a <= 0.9 for a in alphas)

    def test_higher_is_better_direction(self):
        state = SmoothingState(prev_weights=np.array([[0.5, 0.5]]), prev_metric=0.5)
        _, up = smooth_update(state, np.array([[0.5, 0.5]]), 0.6, "higher")
        assert up.alpha == pytest.approx(0.6)
        _, down = smooth_update(state, np.array([[0.5, 0.5]]), 0.4, "higher")
        assert down.alpha == pytest.approx(0.4)

    def test_smoothed_entries_stay_between_old_and_new(self):
        rng = np.random.default_rng(11)
        state = SmoothingState(
            alpha=0.3,
            prev_weights=combine_local(rng.uniform(0, 1, (10, 4))),
            prev_metric=1.0,
        )
        new = combine_local(rng.uniform(0, 1, (10, 4)))
        # Reproduce the blend before re-normalization to check convexity.
        blended = 0.2 * new + 0.8 * state.prev_weights  # alpha steps down to 0.2
        _, next_state = smooth_update(state, new, current_metric=2.0)
        assert next_state.alpha == pytest.approx(0.2)
        lo = np.minimum(new, state.prev_weights)
        hi = np.maximum(new, state.prev_weights)
        assert np.all(blended >= lo - 1e-12) and np.all(blended <= hi + 1e-12)

    def test_shape_drift_raises(self):
        state = SmoothingState(prev_weights=np.array([[0.5, 0.5]]), prev_metric=1.0)
        with pytest.raises(ShapeError):
            smooth_update(state, np.full((2, 2), 0.5), current_metric=0.5)

    def test_smoothed_rows_stay_stochastic_over_many_epochs(self):
        rng = np.random.default_rng(13)
        state = SmoothingState()
        for epoch in range(50):
            new = combine_local(rng.uniform(0, 2, (8, 3)))
            smoothed, state = smooth_update(state, new, float(rng.uniform(0, 1)))
            validate_weight_matrix(smoothed)


class TestCsvExport:
    def test_weight_trajectory_round_trip(self, tmp_path):
        path = tmp_path / "weights_trajectory.csv"
        w1 = np.array([[0.25, 0.75], [0.5, 0.5]])
        w2 = np.array([[0.4, 0.6], [0.9, 0.1]])
        write_weight_trajectory_csv(path, [1, 2], [w1, w2])
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "instance", "modality", "weight"]
        assert len(rows) == 1 + 2 * 4
        assert float(rows[1][3]) == 0.25
        assert rows[1][:3] == ["1", "0", "0"]

    def test_alpha_trajectory_header(self, tmp_path):
        path = tmp_path / "alpha.csv"
        write_alpha_trajectory_csv(path, [1, 2, 3], [0.5, 0.6, 0.5])
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "alpha"]
        assert [float(r[1]) for r in rows[1:]] == [0.5, 0.6, 0.5]
