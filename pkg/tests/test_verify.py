"""Brute-force oracles and numerical checks."""

import numpy as np
import pytest

from mmo import verify
from mmo.data import DistPoint, DiscreteDistribution, random_discrete, single_point_dist
from mmo.errors import DataError, EnumerationScaleError
from mmo.losses import CostCoefficients, SurrogateParams, prepare_costs
from mmo.metrics import preset
from mmo.verify import (
    check_equivalence,
    check_factorization,
    check_gradient,
    check_regret_bound,
    check_sign_agreement,
    conditional_regret_surrogate,
    conditional_regret_target,
    lambda_star_exhaustive,
)

ZERO_ONE_COST = CostCoefficients(gamma=np.array([[-0.5, 0.0, 0.0, 0.5]]))


class TestLambdaStar:
    def test_canonical(self):
        lam, clf = lambda_star_exhaustive(single_point_dist([0.8]), preset("f1", 1, "micro"))
        assert lam == pytest.approx(8 / 9, abs=1e-12)
        assert clf.predict("x0")[0] == 1

    def test_deterministic_labels_reach_one(self):
        dist = DiscreteDistribution(
            points=(DistPoint(x_id="a", weight=1.0, marginals=np.array([1.0, 0.0])),)
        )
        lam, _ = lambda_star_exhaustive(dist, preset("f1", 2, "micro"))
        assert lam == pytest.approx(1.0, abs=1e-12)

    def test_no_positives_gives_zero_for_f1(self):
        lam, _ = lambda_star_exhaustive(single_point_dist([0.0]), preset("f1", 1, "micro"))
        assert lam == pytest.approx(0.0, abs=1e-12)

    def test_agreement_with_population_metric(self):
        from mmo.metrics import population_metric

        for i in range(5):
            dist = random_discrete(support=2, l=2, seed=(31, i))
            spec = preset("jaccard", 2, "micro")
            lam, clf = lambda_star_exhaustive(dist, spec)
            assert population_metric(dist, clf, spec) == pytest.approx(lam, abs=1e-12)


class TestEquivalenceAndSign:
    def test_canonical_equivalence(self):
        rep = check_equivalence(single_point_dist([0.8]), preset("f1", 1, "micro"))
        assert rep.passed and rep.max_violation <= 1e-12

    def test_canonical_sign_grid(self):
        rep = check_sign_agreement(single_point_dist([0.8]), preset("f1", 1, "micro"))
        assert rep.passed

    def test_random_instances(self):
        for i in range(15):
            dist = random_discrete(support=3, l=2, seed=(17, i))
            spec = preset("f1" if i % 2 else "jaccard", 2, "micro")
            assert check_equivalence(dist, spec).passed
            assert check_sign_agreement(dist, spec).passed

    def test_macro_rejected(self):
        with pytest.raises(ValueError):
            lambda_star_exhaustive(single_point_dist([0.8]), preset("f1", 1, "macro"))


class TestConditionalRegretTarget:
    def test_best_response_has_zero_regret(self):
        assert conditional_regret_target([0.9, 0.1], ZERO_ONE_COST, [1]) == pytest.approx(0.0)

    def test_mismatch_example(self):
        assert conditional_regret_target([0.9, 0.1], ZERO_ONE_COST, [-1]) == pytest.approx(0.8)

    def test_nonnegative_random(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            l = int(rng.integers(1, 4))
            gamma = CostCoefficients(gamma=rng.uniform(-1, 1, size=(l, 4)))
            table = rng.uniform(0.01, 1, size=1 << l)
            table /= table.sum()
            table[-1] = 1.0 - table[:-1].sum()
            pred = rng.choice([-1, 1], size=l)
            assert conditional_regret_target(table, gamma, pred) >= 0.0

    def test_shift_invariance(self):
        """Adding a constant to every cell leaves the regret unchanged."""
        g1 = CostCoefficients(gamma=np.array([[0.3, -0.2, 0.1, 0.4]]))
        g2 = CostCoefficients(gamma=g1.gamma + np.array([[0.0, 0.0, 0.0, 5.0]]))
        t = [0.7, 0.3]
        assert conditional_regret_target(t, g1, [-1]) == pytest.approx(
            conditional_regret_target(t, g2, [-1])
        )

    def test_bad_table(self):
        with pytest.raises(DataError):
            conditional_regret_target([0.9, 0.2], ZERO_ONE_COST, [1])


class TestConditionalRegretSurrogate:
    def test_zero_at_exact_optimizer(self):
        gamma = CostCoefficients(gamma=np.array([[0.4, -0.2, 0.3, 0.1]]))
        params = SurrogateParams(tau=0.0)
        table = np.array([0.7, 0.3])
        costs = prepare_costs(gamma, params)
        c = np.array(
            [
                0.7 * costs.cells[0, 0, 0] + 0.3 * costs.cells[0, 0, 1],
                0.7 * costs.cells[0, 1, 0] + 0.3 * costs.cells[0, 1, 1],
            ]
        )
        w = costs.offset - c
        h_opt = 0.5 * np.log(w[0] / w[1])
        res = conditional_regret_surrogate(table, gamma, params, np.array([h_opt]))
        assert res.exact
        assert res.value == pytest.approx(0.0, abs=1e-9)

    def test_symmetric_zero_score(self):
        """Equal weights put the optimum at zero scores."""
        gamma = CostCoefficients(gamma=np.array([[0.0, 0.5, 0.0, 0.2]]))
        params = SurrogateParams(tau=0.0)
        res = conditional_regret_surrogate([0.5, 0.5], gamma, params, np.zeros(1))
        assert res.value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("tau", [0.0, 0.5, 1.0])
    def test_closed_form_matches_numeric(self, tau):
        """The single-label closed form agrees with multi-start descent."""
        rng = np.random.default_rng(8)
        for trial in range(10):
            gamma = CostCoefficients(gamma=rng.uniform(-1, 1, size=(1, 4)))
            params = SurrogateParams(tau=tau)
            table = rng.uniform(0.05, 0.95)
            table = np.array([table, 1 - table])
            scores = rng.uniform(-3, 3, size=1)
            costs = prepare_costs(gamma, params)
            c = verify._config_cost_matrix(costs.cells, 1) @ table
            w = costs.offset - c
            value = verify._surrogate_value_enum(w, scores, tau)
            best = verify._numeric_surrogate_minimum(
                w[None, :], scores[None, :], tau, starts=32, steps=500, seed=trial
            )[0]
            numeric = max(0.0, value - best)
            exact = conditional_regret_surrogate(table, gamma, params, scores)
            assert numeric == pytest.approx(exact.value, abs=1e-6)

    def test_multilabel_flagged_lower_bound(self):
        gamma = CostCoefficients(gamma=np.random.default_rng(0).uniform(-1, 1, (2, 4)))
        table = np.full(4, 0.25)
        res = conditional_regret_surrogate(
            table, gamma, SurrogateParams(tau=0.0), np.zeros(2), starts=8, steps=100
        )
        assert not res.exact
        assert res.value >= 0.0

    def test_guard(self):
        gamma = CostCoefficients(gamma=np.zeros((4, 4)))
        with pytest.raises(EnumerationScaleError):
            conditional_regret_surrogate(
                np.full(16, 1 / 16), gamma, SurrogateParams(), np.zeros(4)
            )


class TestRegretBound:
    @pytest.mark.parametrize("tau", [0.0, 0.5, 1.0])
    def test_exact_branch_smoke(self, tau):
        rep = check_regret_bound(1, tau, trials=800, seed=5)
        assert rep.passed
        assert rep.info["branch"] == "exact"

    def test_numeric_branch_smoke(self):
        rep = check_regret_bound(2, 0.0, trials=60, seed=9)
        assert rep.passed
        assert rep.info["branch"] == "lower_bound"

    def test_unsupported_l(self):
        with pytest.raises(EnumerationScaleError):
            check_regret_bound(4, 0.0, trials=1, seed=0)


class TestFactorizationCheck:
    def test_small_sweep(self):
        rep = check_factorization(l_max=4, trials=20, seed=3)
        assert rep.passed
        assert rep.max_violation <= 1e-9

    def test_report_names_reproduction_seed(self):
        rep = check_factorization(l_max=2, trials=5, seed=3)
        assert rep.worst is not None and "seed" in rep.worst


class TestGradientCheck:
    def test_small_sweep(self):
        rep = check_gradient(trials=120, seed=1)
        assert rep.passed
        assert rep.max_violation <= 1e-5


class TestRuntimeCheck:
    def test_small_scaling_gate(self):
        rep = verify.check_runtime_scaling(l_list=(32, 128), repeats=3)
        assert set(rep.info["ratios"]) == {"32->128"}
        assert rep.tolerance == 8.0
