"""Cost coefficients, the comp-sum transform, and the factorized surrogate."""

import numpy as np
import pytest

from mmo.errors import OracleScaleError, OverflowGuardError
from mmo.losses import (
    CostCoefficients,
    SurrogateParams,
    cost_offset,
    gamma_from,
    phi_tau,
    prepare_costs,
    surrogate_factorized,
    surrogate_gradient,
    surrogate_naive,
    target_loss,
)
from mmo.metrics import preset
from mmo.models import sign_configs


def _f1_gamma(lam, l=1):
    spec = preset("f1", l, "micro")
    return gamma_from(spec.alpha, spec.beta, lam)


class TestGammaFrom:
    def test_cost_gaps_at_lambda(self):
        """For the f1 coefficients the per-label penalty gaps are
        cost(FN) - cost(TP) = 2 - lambda and cost(FP) - cost(TN) = lambda."""
        lam = 0.7
        g = _f1_gamma(lam).gamma[0]
        cell = lambda h, y: g[0] * h * y + g[1] * y + g[2] * h + g[3]
        assert cell(-1, 1) - cell(1, 1) == pytest.approx(2 - lam, abs=1e-12)
        assert cell(1, -1) - cell(-1, -1) == pytest.approx(lam, abs=1e-12)

    def test_lambda_zero_is_negated_alpha(self):
        spec = preset("jaccard", 3, "micro")
        g = gamma_from(spec.alpha, spec.beta, 0.0)
        np.testing.assert_allclose(g.gamma, -spec.alpha.as_array(), atol=1e-15)

    def test_identical_sides_cancel_at_one(self):
        spec = preset("f1", 2, "micro")
        g = gamma_from(spec.alpha, spec.alpha, 1.0)
        np.testing.assert_allclose(g.gamma, 0.0, atol=1e-15)

    def test_defining_identity(self):
        spec = preset("jaccard", 4, "micro")
        lam = 0.37
        g = gamma_from(spec.alpha, spec.beta, lam)
        np.testing.assert_allclose(
            g.gamma, lam * spec.beta.as_array() - spec.alpha.as_array(), atol=1e-15
        )


class TestTargetLoss:
    def test_f1_cells(self):
        g = _f1_gamma(0.7)
        assert target_loss(g, [1], [1]) == pytest.approx(2 * 0.7 - 2, abs=1e-12)
        assert target_loss(g, [1], [-1]) == pytest.approx(0.7, abs=1e-12)

    def test_zero_gamma(self):
        g = CostCoefficients(gamma=np.zeros((3, 4)))
        assert target_loss(g, [1, -1, 1], [-1, -1, 1]) == 0.0


class TestPhiTau:
    def test_log_branch_at_one(self):
        assert phi_tau(0.0, 1.0) == 0.0

    def test_continuity_with_log(self):
        """The tau -> 0 limit of the power branch is log(u)."""
        u = np.linspace(0.1, 10, 200)
        np.testing.assert_allclose(phi_tau(1e-8, u), np.log(u), atol=1e-6)

    @pytest.mark.parametrize("tau", [0.0, 0.3, 1.0, 2.5])
    def test_strictly_monotone_in_u(self, tau):
        """phi is strictly increasing in the normalizer u, i.e. strictly
        decreasing in the configuration probability s = 1/u."""
        u = np.linspace(0.05, 20, 500)
        assert np.all(np.diff(phi_tau(tau, u)) > 0)

    def test_power_branch_values(self):
        assert phi_tau(1.0, 2.0) == pytest.approx(0.5)
        assert phi_tau(0.5, 4.0) == pytest.approx(1.0)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            phi_tau(0.0, 0.0)
        with pytest.raises(ValueError):
            phi_tau(-0.5, 1.0)


class TestCostOffset:
    def test_modes_agree_at_single_label(self):
        g = CostCoefficients(gamma=np.array([[0.3, -0.2, 0.5, 0.1]]))
        exact = cost_offset(g, SurrogateParams(offset_mode="exact_paper"))
        sigma = cost_offset(g, SurrogateParams(offset_mode="sigma"))
        assert exact == pytest.approx(sigma)

    def test_constant_cells(self):
        """Per-label cells identically c give sigma = 4*l*c; the exact offset
        is always 4^(l-1) * sigma."""
        c, l = 0.7, 3
        g = CostCoefficients(gamma=np.tile([0.0, 0.0, 0.0, c], (l, 1)))
        sigma = cost_offset(g, SurrogateParams(offset_mode="sigma", nonneg_shift=0.0))
        exact = cost_offset(g, SurrogateParams(offset_mode="exact_paper", nonneg_shift=0.0))
        assert sigma == pytest.approx(4 * l * c)
        assert exact == pytest.approx(4.0 ** (l - 1) * sigma)

    @pytest.mark.parametrize("mode", ["sigma", "exact_paper"])
    def test_weights_nonnegative(self, mode):
        """S - shifted_cost(y', y) >= 0 for every configuration pair."""
        rng = np.random.default_rng(7)
        for trial in range(100):
            l = int(rng.integers(1, 7))
            g = CostCoefficients(gamma=rng.uniform(-2, 2, size=(l, 4)))
            costs = prepare_costs(g, SurrogateParams(offset_mode=mode))
            cfg = sign_configs(l)
            worst = -np.inf
            for yp in cfg:
                for y in cfg:
                    worst = max(worst, costs.config_cost(yp, y))
            assert costs.offset - worst >= -1e-9

    def test_exact_mode_guard(self):
        g = CostCoefficients(gamma=np.zeros((31, 4)))
        with pytest.raises(OverflowGuardError):
            cost_offset(g, SurrogateParams(offset_mode="exact_paper"))


class TestNaive:
    def test_zero_scores_single_label(self):
        """At zero scores both normalizers are 2, so the tau = 0 loss is
        log(2) times the total weight."""
        g = CostCoefficients(gamma=np.array([[0.4, -0.1, 0.2, 0.3]]))
        params = SurrogateParams(tau=0.0, offset_mode="sigma", normalization="raw")
        costs = prepare_costs(g, params)
        w_sum = 2 * costs.offset - sum(
            costs.config_cost([s], [1]) for s in (1, -1)
        )
        assert surrogate_naive(g, params, np.zeros(1), [1]) == pytest.approx(
            np.log(2.0) * w_sum
        )

    def test_single_label_is_weighted_logistic(self):
        """l = 1 reduces to a two-term weighted logistic loss in the margin."""
        g = CostCoefficients(gamma=np.array([[0.4, -0.1, 0.2, 0.3]]))
        params = SurrogateParams(tau=0.0, offset_mode="sigma", normalization="raw")
        costs = prepare_costs(g, params)
        h, y = 0.83, 1
        w_plus = costs.offset - costs.config_cost([1], [y])
        w_minus = costs.offset - costs.config_cost([-1], [y])
        expected = w_plus * np.log(1 + np.exp(-2 * h)) + w_minus * np.log(1 + np.exp(2 * h))
        assert surrogate_naive(g, params, np.array([h]), [y]) == pytest.approx(expected)

    def test_scale_guard(self):
        g = CostCoefficients(gamma=np.zeros((20, 4)))
        with pytest.raises(OracleScaleError):
            surrogate_naive(g, SurrogateParams(), np.zeros(20), np.ones(20, dtype=int))


class TestFactorized:
    @pytest.mark.parametrize("tau", [0.0, 0.5, 2.0])
    @pytest.mark.parametrize("mode", ["sigma", "exact_paper"])
    def test_matches_naive(self, tau, mode):
        rng = np.random.default_rng(11)
        for _ in range(30):
            l = int(rng.integers(1, 7))
            g = CostCoefficients(gamma=rng.uniform(-1, 1, size=(l, 4)))
            y = rng.choice([-1, 1], size=l).astype(np.int8)
            h = rng.uniform(-3, 3, size=l)
            for norm in ("raw", "per_config"):
                params = SurrogateParams(tau=tau, offset_mode=mode, normalization=norm)
                nv = surrogate_naive(g, params, h, y)
                fv = surrogate_factorized(g, params, h, y)
                assert fv == pytest.approx(nv, rel=1e-9, abs=1e-9)

    def test_l1_reduces_to_cost_weighted_logz(self):
        """At l = 1 the cross term vanishes: raw total = sum_y' c(y') log Z(y')."""
        g = CostCoefficients(gamma=np.array([[0.2, 0.1, -0.4, 0.6]]))
        params = SurrogateParams(tau=0.0, offset_mode="sigma", normalization="raw")
        costs = prepare_costs(g, params)
        h, y = -0.37, -1
        cp = costs.offset - costs.config_cost([1], [y])
        cm = costs.offset - costs.config_cost([-1], [y])
        expected = cp * np.logaddexp(0, -2 * h) + cm * np.logaddexp(0, 2 * h)
        assert surrogate_factorized(g, params, np.array([h]), [y]) == pytest.approx(expected)

    def test_normalization_preserves_argmin(self):
        """per_config is a positive rescaling of raw, so finite-candidate
        argmins coincide."""
        rng = np.random.default_rng(5)
        l = 4
        g = CostCoefficients(gamma=rng.uniform(-1, 1, size=(l, 4)))
        y = rng.choice([-1, 1], size=l).astype(np.int8)
        candidates = rng.uniform(-2, 2, size=(20, l))
        vals = {}
        for norm in ("raw", "per_config"):
            params = SurrogateParams(tau=0.0, normalization=norm)
            vals[norm] = [surrogate_factorized(g, params, c, y) for c in candidates]
        assert np.argmin(vals["raw"]) == np.argmin(vals["per_config"])

    def test_block_structure_single_active_label(self):
        """With one nonzero label (no shift), the collapsed value assembles
        from hand-computed per-label marginals."""
        l = 5
        gamma_row = np.array([0.6, -0.3, 0.2, 0.1])
        g = CostCoefficients(gamma=np.vstack([gamma_row, np.zeros((l - 1, 4))]))
        params = SurrogateParams(tau=0.0, offset_mode="sigma", normalization="raw", nonneg_shift=0.0)
        rng = np.random.default_rng(2)
        h = rng.uniform(-2, 2, size=l)
        y = rng.choice([-1, 1], size=l).astype(np.int8)

        cell = lambda hp, yv: gamma_row @ np.array([hp * yv, yv, hp, 1.0])
        sigma = sum(cell(a, b) for a in (1, -1) for b in (1, -1))
        cp = np.full(l, sigma / l)
        cm = np.full(l, sigma / l)
        cp[0] -= cell(1, y[0])
        cm[0] -= cell(-1, y[0])
        b = np.logaddexp(0, -2 * h) + np.logaddexp(0, 2 * h)
        a = cp + cm
        c = cp * np.logaddexp(0, -2 * h) + cm * np.logaddexp(0, 2 * h)
        expected = 2.0 ** (l - 2) * (a.sum() * b.sum() - (a * b).sum()) + 2.0 ** (
            l - 1
        ) * c.sum()
        assert surrogate_factorized(g, params, h, y) == pytest.approx(expected, rel=1e-12)

    def test_raw_overflow_guard(self):
        g = CostCoefficients(gamma=np.zeros((31, 4)))
        params = SurrogateParams(tau=0.0, offset_mode="sigma", normalization="raw")
        with pytest.raises(OverflowGuardError):
            surrogate_factorized(g, params, np.zeros(31), np.ones(31, dtype=int))


class TestGradient:
    def test_finite_difference_spot_checks(self):
        rng = np.random.default_rng(17)
        step = 1e-4
        for _ in range(25):
            l = int(rng.integers(1, 9))
            tau = float(rng.choice([0.0, 0.5, 1.0]))
            g = CostCoefficients(gamma=rng.uniform(-1, 1, size=(l, 4)))
            y = rng.choice([-1, 1], size=l).astype(np.int8)
            h = rng.uniform(-3, 3, size=l)
            params = SurrogateParams(tau=tau)
            grad = surrogate_gradient(g, params, h, y)
            for j in range(l):
                hp, hm = h.copy(), h.copy()
                hp[j] += step
                hm[j] -= step
                fd = (
                    surrogate_factorized(g, params, hp, y)
                    - surrogate_factorized(g, params, hm, y)
                ) / (2 * step)
                assert abs(grad[j] - fd) <= 1e-5 * max(1.0, abs(fd))

    def test_symmetric_costs_zero_gradient_at_origin(self):
        """When both candidate signs carry the same cost the optimum sits at
        zero scores, so the gradient vanishes there."""
        g = CostCoefficients(gamma=np.array([[0.0, 0.3, 0.0, 0.5]] * 3))
        params = SurrogateParams(tau=0.0)
        grad = surrogate_gradient(g, params, np.zeros(3), np.array([1, -1, 1]))
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_weight_scaling_linearity(self):
        """Scaling gamma (with a proportionally scaled shift) scales loss and
        gradient linearly."""
        rng = np.random.default_rng(23)
        l, scale = 4, 3.5
        base = rng.uniform(-1, 1, size=(l, 4))
        y = rng.choice([-1, 1], size=l).astype(np.int8)
        h = rng.uniform(-2, 2, size=l)
        g1 = CostCoefficients(gamma=base)
        g2 = CostCoefficients(gamma=scale * base)
        p = SurrogateParams(tau=0.0, normalization="raw")
        np.testing.assert_allclose(
            scale * surrogate_gradient(g1, p, h, y),
            surrogate_gradient(g2, p, h, y),
            rtol=1e-12,
        )
        assert scale * surrogate_factorized(g1, p, h, y) == pytest.approx(
            surrogate_factorized(g2, p, h, y), rel=1e-12
        )
