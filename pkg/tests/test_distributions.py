"""KL-divergence primitives: frozen examples, oracle agreement, and properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btwmoe.distributions import (
    PROB_FLOOR,
    VARIANCE_FLOOR,
    CategoricalDist,
    GaussianParams,
    categorical_kl,
    gaussian_kl,
    kl_quadrature_oracle,
    residual_variance,
)
from btwmoe.errors import InvalidInputError, ShapeError


def random_gaussian(rng):
    return GaussianParams(
        mean=float(rng.uniform(-10, 10)),
        variance=float(rng.uniform(0.01, 100)),
    )


def random_categorical(rng, n_classes):
    p = rng.uniform(0.0, 1.0, size=n_classes)
    return CategoricalDist(p / p.sum())


class TestResidualVariance:
    def test_direct_evaluation(self):
        assert residual_variance(2.0, 0.5) == pytest.approx(2.25)
        assert residual_variance(-3.0, 3.0) == pytest.approx(36.0)

    def test_zero_residual_clamps_to_floor(self):
        assert residual_variance(1.0, 1.0) == VARIANCE_FLOOR

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            residual_variance(float("nan"), 0.0)
        with pytest.raises(InvalidInputError):
            residual_variance(0.0, float("inf"))


class TestGaussianKl:
    def test_identical_distributions_are_exactly_zero(self):
        assert gaussian_kl(GaussianParams(0, 1), GaussianParams(0, 1)) == 0.0
        assert gaussian_kl(GaussianParams(5, 2), GaussianParams(5, 2)) == 0.0

    def test_frozen_quadrature_value(self):
        # 0.4431471806 was frozen from kl_quadrature_oracle((0,1), (1,4), 1e5).
        got = gaussian_kl(GaussianParams(0, 1), GaussianParams(1, 4))
        assert got == pytest.approx(0.4431471806, abs=1e-9)

    def test_invalid_params_rejected_at_construction(self):
        with pytest.raises(InvalidInputError):
            GaussianParams(0.0, 0.0)
        with pytest.raises(InvalidInputError):
            GaussianParams(float("nan"), 1.0)

    def test_oracle_agreement_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p, q = random_gaussian(rng), random_gaussian(rng)
            closed = gaussian_kl(p, q)
            quad = kl_quadrature_oracle(p, q, 100_000)
            assert abs(closed - quad) <= 1e-6

    def test_non_negative_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            assert gaussian_kl(random_gaussian(rng), random_gaussian(rng)) >= -1e-12

    def test_asymmetry_witness(self):
        p, q = GaussianParams(0, 1), GaussianParams(1, 4)
        assert abs(gaussian_kl(p, q) - gaussian_kl(q, p)) > 0.1


class TestQuadratureOracle:
    def test_identical_distributions_vanish(self):
        p = GaussianParams(0, 1)
        assert abs(kl_quadrature_oracle(p, p, 100_000)) < 1e-8

    def test_matches_closed_form(self):
        p, q = GaussianParams(2, 0.5), GaussianParams(-1, 3)
        assert kl_quadrature_oracle(p, q, 100_000) == pytest.approx(
            gaussian_kl(p, q), abs=1e-6
        )

    def test_rejects_coarse_grid(self):
        with pytest.raises(InvalidInputError):
            kl_quadrature_oracle(GaussianParams(0, 1), GaussianParams(0, 1), 100)


class TestCategoricalKl:
    def test_identical_distributions_are_exactly_zero(self):
        p = CategoricalDist(np.array([0.5, 0.5]))
        assert categorical_kl(p, p) == 0.0
        spike = CategoricalDist(np.array([1.0, 0.0]))
        assert categorical_kl(spike, spike) == 0.0

    def test_hand_summed_values(self):
        p = CategoricalDist(np.array([1.0, 0.0]))
        q = CategoricalDist(np.array([0.5, 0.5]))
        # sum_c p_c log(p_c/q_c) = log 2
        assert categorical_kl(p, q) == pytest.approx(np.log(2), abs=1e-9)

        p3 = CategoricalDist(np.array([0.25, 0.25, 0.5]))
        q3 = CategoricalDist(np.array([0.5, 0.25, 0.25]))
        # 0.25 log(1/2) + 0 + 0.5 log 2 = 0.25 log 2
        assert categorical_kl(p3, q3) == pytest.approx(0.25 * np.log(2), abs=1e-9)

    def test_length_mismatch_raises(self):
        p = CategoricalDist(np.array([0.5, 0.5]))
        q = CategoricalDist(np.array([1 / 3, 1 / 3, 1 / 3]))
        with pytest.raises(ShapeError):
            categorical_kl(p, q)

    def test_zero_support_stays_finite(self):
        p = CategoricalDist(np.array([0.5, 0.5]))
        q = CategoricalDist(np.array([1.0, 0.0]))
        kl = categorical_kl(p, q)
        assert np.isfinite(kl)
        # q's zero entry is lifted to the floor, so the tail term is ~0.5 log(0.5/1e-9)
        assert kl == pytest.approx(0.5 * np.log(0.5) + 0.5 * np.log(0.5 / PROB_FLOOR), rel=1e-6)

    def test_non_negative_randomized(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            c = int(rng.integers(2, 8))
            kl = categorical_kl(random_categorical(rng, c), random_categorical(rng, c))
            assert kl >= -1e-12

    def test_asymmetry_witness(self):
        p = CategoricalDist(np.array([1.0, 0.0]))
        q = CategoricalDist(np.array([0.5, 0.5]))
        assert abs(categorical_kl(p, q) - categorical_kl(q, p)) > 0.1

    def test_invalid_probs_rejected(self):
        with pytest.raises(InvalidInputError):
            CategoricalDist(np.array([0.7, 0.7]))
        with pytest.raises(InvalidInputError):
            CategoricalDist(np.array([1.2, -0.2]))
        with pytest.raises(ShapeError):
            CategoricalDist(np.array([1.0]))


@given(
    mp=st.floats(-10, 10),
    vp=st.floats(0.01, 100),
    mq=st.floats(-10, 10),
    vq=st.floats(0.01, 100),
)
@settings(max_examples=200, deadline=None)
def test_gaussian_kl_nonnegative_property(mp, vp, mq, vq):
    kl = gaussian_kl(GaussianParams(mp, vp), GaussianParams(mq, vq))
    assert kl >= -1e-12


@given(
    raw_p=st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=6),
    raw_q=st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=6),
)
@settings(max_examples=200, deadline=None)
def test_categorical_kl_nonnegative_property(raw_p, raw_q):
    n = min(len(raw_p), len(raw_q))
    p = np.array(raw_p[:n]) / np.sum(raw_p[:n])
    q = np.array(raw_q[:n]) / np.sum(raw_q[:n])
    assert categorical_kl(CategoricalDist(p), CategoricalDist(q)) >= -1e-12
