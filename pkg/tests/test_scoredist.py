import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from raschmix import ScoreModel, fit_scoredist, score_prob
from raschmix.scoredist import FLOOR, mv_basis, n_score_params


class TestScoreProb:
    def test_uniform_mean_variance(self):
        sm = ScoreModel("mean-variance", 12, [0.0, 0.0])
        np.testing.assert_allclose([score_prob(sm, r) for r in range(1, 12)], 1 / 11)

    def test_uniform_saturated(self):
        sm = ScoreModel("saturated", 12, np.zeros(10))
        np.testing.assert_allclose([score_prob(sm, r) for r in range(1, 12)], 1 / 11)

    def test_closed_form_normalization(self):
        sm = ScoreModel("mean-variance", 12, [1.0, 0.0])
        r = np.arange(1, 12)
        want = np.exp(r / 12) / np.exp(r / 12).sum()
        np.testing.assert_allclose([score_prob(sm, k) for k in r], want, rtol=1e-13)

    def test_out_of_range(self):
        sm = ScoreModel("mean-variance", 5, [0.0, 0.0])
        for r in (0, 5, 6):
            with pytest.raises(ValueError):
                score_prob(sm, r)

    def test_parameter_count(self):
        assert n_score_params("saturated", 12) == 10
        assert n_score_params("mean-variance", 12) == 2
        with pytest.raises(ValueError):
            ScoreModel("saturated", 12, [0.0, 0.0])

    @given(
        st.integers(3, 30),
        st.floats(-5, 5),
        st.floats(-5, 5),
    )
    def test_sums_to_one(self, m, d1, d2):
        sm = ScoreModel("mean-variance", m, [d1, d2])
        assert np.exp(sm.log_probs()).sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.floats(-8, 8), min_size=1, max_size=20))
    def test_saturated_sums_to_one(self, delta):
        sm = ScoreModel("saturated", len(delta) + 2, delta)
        assert np.exp(sm.log_probs()).sum() == pytest.approx(1.0, abs=1e-12)


class TestFitScoredist:
    def test_point_mass(self):
        sm = fit_scoredist(np.full(40, 6), kind="saturated", m=12)
        p = np.exp(sm.log_probs())
        assert p[5] == pytest.approx(1.0, abs=1e-8)
        assert np.all(p[np.arange(11) != 5] >= FLOOR * 0.99)

    def test_weighted_frequencies(self):
        sm = fit_scoredist([1, 2, 3], weights=[0.25, 0.5, 0.25], kind="saturated", m=4)
        np.testing.assert_allclose(np.exp(sm.log_probs()), [0.25, 0.5, 0.25], rtol=1e-12)

    def test_saturated_reproduces_frequencies(self):
        rng = np.random.default_rng(0)
        r = rng.integers(1, 10, 300)
        w = rng.uniform(0, 2, 300)
        sm = fit_scoredist(r, w, "saturated", m=10)
        freq = np.bincount(r - 1, weights=w, minlength=9) / w.sum()
        np.testing.assert_allclose(np.exp(sm.log_probs()), freq, rtol=1e-12)

    def test_recovery_mean_variance(self):
        rng = np.random.default_rng(1)
        m, truth, n = 12, np.array([0.8, -0.5]), 5000
        p = np.exp(ScoreModel("mean-variance", m, truth).log_probs())
        r = rng.choice(np.arange(1, m), size=n, p=p)
        sm = fit_scoredist(r, kind="mean-variance", m=m)
        x = mv_basis(m)
        q = np.exp(sm.log_probs())
        mu = q @ x
        info = n * (x - mu).T @ ((x - mu) * q[:, None])
        se = np.sqrt(np.diag(np.linalg.inv(info)))
        assert np.all(np.abs(sm.delta - truth) < 3 * se)

    def test_mean_variance_gradient_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            m = int(rng.integers(3, 20))
            r = rng.integers(1, m, 200)
            w = rng.uniform(0, 1, 200)
            delta = rng.normal(size=2)
            x = mv_basis(m)

            def ll(d):
                return ScoreModel("mean-variance", m, d).loglik(r, w)

            p = np.exp(ScoreModel("mean-variance", m, delta).log_probs())
            grad = w @ x[r - 1] - w.sum() * (p @ x)
            h = 1e-6
            fd = np.array([(ll(delta + h * e) - ll(delta - h * e)) / (2 * h) for e in np.eye(2)])
            np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-9)

    def test_nesting(self):
        rng = np.random.default_rng(3)
        r = np.concatenate([rng.integers(1, 3, 200), rng.integers(9, 11, 200)])
        sat = fit_scoredist(r, kind="saturated", m=11)
        mv = fit_scoredist(r, kind="mean-variance", m=11)
        assert sat.loglik(r) >= mv.loglik(r)

    def test_errors(self):
        with pytest.raises(ValueError, match="no scores"):
            fit_scoredist([], kind="saturated", m=4)
        with pytest.raises(ValueError, match="outside"):
            fit_scoredist([0, 1], kind="saturated", m=4)
        with pytest.raises(ValueError, match="positive"):
            fit_scoredist([1, 2], weights=[0, 0], kind="mean-variance", m=4)

    def test_include_extremes_support(self):
        sm = fit_scoredist([0, 4, 2, 2], kind="saturated", m=4, include_extremes=True)
        np.testing.assert_allclose(np.exp(sm.log_probs()), [0.25, FLOOR, 0.5, FLOOR, 0.25], rtol=1e-8)
