import numpy as np
import pytest
from scipy.special import expit

from raschmix import MixtureSpec, ScenarioSpec, generate_scenario, run_study
from raschmix.sim import replication_seeds, scenario_cells


class TestScenarioSpec:
    @pytest.mark.parametrize(
        "sid, theta, delta",
        [(1, 1.0, 0.0), (1, 0.0, 1.0), (2, 1.0, 1.0), (3, 0.0, 0.0), (3, 1.0, 1.0), (4, 0.0, 1.0), (5, 0.0, 1.0), (6, 0, 0)],
    )
    def test_invalid_combinations(self, sid, theta, delta):
        with pytest.raises(ValueError):
            ScenarioSpec(sid, theta, delta)

    def test_dif_items_distinct(self):
        with pytest.raises(ValueError):
            ScenarioSpec(2, delta=1.0, dif_items=(3, 3))

    def test_class_betas(self):
        b = ScenarioSpec(2, delta=2.0).class_betas()
        np.testing.assert_allclose(b.sum(axis=1), 0.0, atol=1e-12)
        gap = b[1] - b[0]
        np.testing.assert_allclose(gap[[9, 10]] - gap[0], 2.0)
        np.testing.assert_allclose(np.delete(gap, [9, 10]), gap[0])

    def test_split_dif(self):
        b = ScenarioSpec(2, delta=2.0, split_dif=True).class_betas()
        np.testing.assert_allclose(b[1] - b[0], np.r_[np.zeros(9), -1.0, 1.0, np.zeros(9)], atol=1e-12)


class TestGenerate:
    def test_scenario1(self):
        data, truth = generate_scenario(ScenarioSpec(1, n=4000, seed=0))
        assert not truth.classes.any() and not truth.abilities.any()
        means = data.entries.mean(axis=0)
        assert np.corrcoef(means, truth.beta[0])[0, 1] < -0.95

    @pytest.mark.parametrize("sid, theta, delta", [(2, 0.0, 2.0), (3, 1.0, 0.0), (4, 1.0, 2.0), (5, 1.0, 2.0)])
    def test_moments(self, sid, theta, delta):
        data, truth = generate_scenario(ScenarioSpec(sid, theta, delta, n=20000, seed=sid))
        p = expit(truth.abilities[:, None] - truth.beta[truth.classes])
        np.testing.assert_allclose(data.entries.mean(axis=0), p.mean(axis=0), atol=0.01)

    def test_scenario2_gap_on_dif_items(self):
        data, truth = generate_scenario(ScenarioSpec(2, delta=3.0, n=5000, seed=1))
        m1 = data.entries[truth.classes == 0].mean(axis=0)
        m2 = data.entries[truth.classes == 1].mean(axis=0)
        gap = np.abs(m1 - m2)
        assert np.all(gap[[9, 10]] > 5 * np.median(np.delete(gap, [9, 10])))

    def test_scenario5_delta0_matches_scenario3(self):
        a, ta = generate_scenario(ScenarioSpec(5, 1.0, 0.0, n=20000, seed=2))
        b, tb = generate_scenario(ScenarioSpec(3, 1.0, 0.0, n=20000, seed=3))
        np.testing.assert_allclose(ta.beta[0], tb.beta[0])
        np.testing.assert_allclose(ta.beta[1], ta.beta[0], atol=1e-12)
        np.testing.assert_allclose(np.sort(ta.abilities), np.sort(tb.abilities))
        np.testing.assert_allclose(a.entries.mean(axis=0), b.entries.mean(axis=0), atol=0.015)

    def test_scenario4_vs_5_crosstabs(self):
        _, t4 = generate_scenario(ScenarioSpec(4, 1.0, 2.0, n=1000, seed=4))
        _, t5 = generate_scenario(ScenarioSpec(5, 1.0, 2.0, n=1000, seed=4))

        def tab(t):
            hi = t.abilities > 0
            return np.array([[np.sum(~hi & (t.classes == 0)), np.sum(~hi & (t.classes == 1))],
                             [np.sum(hi & (t.classes == 0)), np.sum(hi & (t.classes == 1))]])

        np.testing.assert_array_equal(tab(t4), [[250, 250], [250, 250]])
        np.testing.assert_array_equal(tab(t5), [[500, 0], [0, 500]])

    def test_scenario4_vs_5_score_margins(self):
        a, _ = generate_scenario(ScenarioSpec(4, 1.0, 2.0, n=20000, seed=5))
        b, _ = generate_scenario(ScenarioSpec(5, 1.0, 2.0, n=20000, seed=6))
        fa = np.bincount(a.scores, minlength=21) / a.n
        fb = np.bincount(b.scores, minlength=21) / b.n
        assert np.max(np.abs(fa - fb)) < 0.02

    def test_seeded(self):
        a, _ = generate_scenario(ScenarioSpec(4, 1.0, 1.0, n=50, seed=9))
        b, _ = generate_scenario(ScenarioSpec(4, 1.0, 1.0, n=50, seed=9))
        np.testing.assert_array_equal(a.entries, b.entries)


class TestStudy:
    def test_cells(self):
        cells = scenario_cells([1, 2, 3], [0.0, 1.0], [0.0, 2.0])
        assert cells == [(1, 0.0, 0.0), (2, 0.0, 0.0), (2, 0.0, 2.0), (3, 1.0, 0.0)]
        with pytest.raises(ValueError):
            scenario_cells([3], [0.0], [0.0])

    def test_seed_rule_independent_of_grid(self):
        assert replication_seeds(7, 2, 0.0, 1.0, 3) == replication_seeds(7, 2, 0.0, 1.0, 3)
        assert replication_seeds(7, 2, 0.0, 1.0, 3) != replication_seeds(7, 2, 0.0, 1.0, 4)
        spec = MixtureSpec(n_starts=1, em_tol=1e-6)
        a = run_study([2], [0.0], [1.0], 1, spec, k_range=(1, 2), seed=7, n=150, m=8)
        b = run_study([2], [0.0], [0.0, 1.0], 1, spec, k_range=(1, 2), seed=7, n=150, m=8)
        assert a.cells[0] == b.cell(2, 0.0, 1.0)

    def test_deterministic_bytes(self):
        spec = MixtureSpec(n_starts=1, em_tol=1e-6)
        a = run_study([1, 5], [1.0], [1.0], 1, spec, k_range=(1, 2), seed=3, n=150, m=8)
        b = run_study([1, 5], [1.0], [1.0], 1, spec, k_range=(1, 2), seed=3, n=150, m=8)
        assert a.to_csv() == b.to_csv()
        assert a.to_json() == b.to_json()

    def test_parallel_matches_serial(self):
        spec = MixtureSpec(n_starts=1, em_tol=1e-6)
        a = run_study([2], [0.0], [1.0], 2, spec, k_range=(1, 2), seed=5, n=150, m=8)
        b = run_study([2], [0.0], [1.0], 2, spec, k_range=(1, 2), seed=5, n=150, m=8, n_jobs=2)
        assert a.to_csv() == b.to_csv()

    def test_rates_in_range(self):
        res = run_study([3], [1.0], [0.0], 2, MixtureSpec(n_starts=1, em_tol=1e-6), k_range=(1, 2), n=150, m=8)
        c = res.cell(3)
        assert c.replications == 2 and 0.0 <= c.rate <= 1.0
        assert res.to_csv().splitlines()[0] == "scenario,theta,delta,replications,n_fitted,rate,mean_k,seeds"

    def test_replications_validated(self):
        with pytest.raises(ValueError):
            run_study([1], [0.0], [0.0], 0)
