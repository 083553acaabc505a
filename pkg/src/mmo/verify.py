"""Brute-force and numerical oracles for desk-scale validation.

Each check returns a :class:`VerifyReport` whose ``passed`` flag is exactly
``max_violation <= tolerance``, with enough per-trial detail (seeds, worst
inputs) to replay a failure in isolation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, xlogy

from . import losses
from .errors import DataError, DegenerateDenominatorError, EnumerationScaleError
from .losses import CostCoefficients, SurrogateParams, prepare_costs
from .metrics import MetricSpec, expected_pair_values
from .models import TabularClassifier, config_index, sign0, sign_configs

_ENUM_GUARD_BITS = 20
_DEN_TOL = 1e-12


@dataclass
class VerifyReport:
    """Outcome of one numerical check."""

    check: str
    trials: int
    tolerance: float
    max_violation: float
    worst: dict | None = None
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "max_violation": self.max_violation,
            "passed": self.passed,
            "worst": self.worst,
            "info": self.info,
        }


def _trial_rng(seed, index):
    """Counter-based per-trial stream so any single trial can be replayed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(index))))


# ---------------------------------------------------------------------------
# exhaustive enumeration over tabular classifiers
# ---------------------------------------------------------------------------


def enumerate_risks(dist, spec: MetricSpec) -> tuple[np.ndarray, np.ndarray]:
    """Expected numerator/denominator sums for every tabular classifier.

    Classifier ``code`` assigns prediction -1 to support point p, label k iff
    bit (p*l + k) of the code is set (matching ``models.enumerate_tabular``).
    Returns arrays of length 2^(support*l).
    """
    if spec.averaging == "macro":
        raise ValueError("enumeration oracles use the ratio-of-sums (micro) form")
    n, l = dist.support_size, dist.l
    bits_total = n * l
    if bits_total > _ENUM_GUARD_BITS:
        raise EnumerationScaleError(
            f"2^{bits_total} classifiers exceed the enumeration guard (2^{_ENUM_GUARD_BITS})"
        )
    vplus_a = np.empty(bits_total)
    vminus_a = np.empty(bits_total)
    vplus_b = np.empty(bits_total)
    vminus_b = np.empty(bits_total)
    for p_idx, point in enumerate(dist.points):
        marg = point.marginal_pos()
        sl = slice(p_idx * l, (p_idx + 1) * l)
        plus = np.ones(l)
        minus = -plus
        vplus_a[sl] = point.weight * expected_pair_values(spec.alpha, plus, marg)
        vminus_a[sl] = point.weight * expected_pair_values(spec.alpha, minus, marg)
        vplus_b[sl] = point.weight * expected_pair_values(spec.beta, plus, marg)
        vminus_b[sl] = point.weight * expected_pair_values(spec.beta, minus, marg)

    total = 1 << bits_total
    a = np.empty(total)
    b = np.empty(total)
    shifts = np.arange(bits_total)
    delta_a = vminus_a - vplus_a
    delta_b = vminus_b - vplus_b
    base_a = vplus_a.sum()
    base_b = vplus_b.sum()
    chunk = 1 << 16
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.float64)
        a[start : start + len(codes)] = base_a + bits @ delta_a
        b[start : start + len(codes)] = base_b + bits @ delta_b
    return a, b


def classifier_from_code(dist, code: int) -> TabularClassifier:
    l = dist.l
    assignment = {}
    for p_idx, point in enumerate(dist.points):
        labels = np.empty(l, dtype=np.int8)
        for k in range(l):
            labels[k] = -1 if (code >> (p_idx * l + k)) & 1 else 1
        assignment[point.x_id] = labels
    return TabularClassifier(assignment=assignment)


def lambda_star_exhaustive(dist, spec: MetricSpec) -> tuple[float, TabularClassifier]:
    """Exact optimal metric value and a maximizing tabular classifier."""
    a, b = enumerate_risks(dist, spec)
    valid = b > _DEN_TOL
    if not valid.any():
        raise DegenerateDenominatorError("micro")
    ratios = np.where(valid, a / np.where(valid, b, 1.0), -np.inf)
    best = int(np.argmax(ratios))
    return float(ratios[best]), classifier_from_code(dist, best)


def min_linearized_risk(a: np.ndarray, b: np.ndarray, lam: float) -> float:
    """Best-in-class value of the linearized cost lam*beta - alpha."""
    return float(np.min(lam * b - a))


def check_equivalence(dist, spec: MetricSpec, tolerance: float = 1e-9) -> VerifyReport:
    """At the optimal ratio value, the best linearized risk is zero and is
    attained by the ratio maximizer; for every classifier the optimality gap
    equals its linearized risk divided by its denominator expectation."""
    a, b = enumerate_risks(dist, spec)
    valid = b > _DEN_TOL
    ratios = np.where(valid, a / np.where(valid, b, 1.0), -np.inf)
    best = int(np.argmax(ratios))
    lam_star = float(ratios[best])

    gaps = lam_star * b - a
    viol_min = abs(float(gaps.min()))
    viol_attained = abs(float(gaps[best]))
    # gap identity: lam_star - a/b == (lam_star*b - a)/b on the valid set
    lhs = lam_star - ratios[valid]
    rhs = gaps[valid] / b[valid]
    viol_identity = float(np.max(np.abs(lhs - rhs))) if valid.any() else 0.0

    max_violation = max(viol_min, viol_attained, viol_identity)
    return VerifyReport(
        check="equivalence",
        trials=int(len(a)),
        tolerance=tolerance,
        max_violation=max_violation,
        worst={"lambda_star": lam_star, "argmax_code": best},
        info={
            "min_risk_violation": viol_min,
            "attainment_violation": viol_attained,
            "identity_violation": viol_identity,
        },
    )


def check_sign_agreement(
    dist,
    spec: MetricSpec,
    n_grid: int = 21,
    lambda_min: float = 0.0,
    lambda_max: float = 1.0,
    tolerance: float = 1e-9,
) -> VerifyReport:
    """sign(best linearized risk at lam) must equal sign(lam - lam_star)."""
    a, b = enumerate_risks(dist, spec)
    valid = b > _DEN_TOL
    ratios = np.where(valid, a / np.where(valid, b, 1.0), -np.inf)
    lam_star = float(ratios.max())

    worst = None
    max_violation = 0.0
    for lam in np.linspace(lambda_min, lambda_max, n_grid):
        g = min_linearized_risk(a, b, float(lam))
        diff = lam - lam_star
        if diff > tolerance:
            violation = max(0.0, -g)
        elif diff < -tolerance:
            violation = max(0.0, g)
        else:
            violation = abs(g)
        if violation > max_violation:
            max_violation = violation
            worst = {"lambda": float(lam), "lambda_star": lam_star, "min_risk": g}
    return VerifyReport(
        check="sign",
        trials=n_grid,
        tolerance=tolerance,
        max_violation=max_violation,
        worst=worst,
        info={"lambda_star": lam_star},
    )


# ---------------------------------------------------------------------------
# conditional regrets
# ---------------------------------------------------------------------------


def _validate_cond(cond, l):
    table = np.asarray(cond, dtype=np.float64)
    if table.shape != (1 << l,):
        raise DataError(f"conditional table must have length 2^{l}")
    if np.any(table < 0) or abs(table.sum() - 1.0) > _DEN_TOL:
        raise DataError("conditional table must be nonnegative and sum to 1")
    return table


def _config_cost_matrix(cells, l):
    """M[i, j] = shifted cost of predicting config i when the truth is config j."""
    idx = (sign_configs(l) < 0).astype(np.intp)
    n = 1 << l
    M = np.zeros((n, n))
    for k in range(l):
        M += cells[k][idx[:, k][:, None], idx[:, k][None, :]]
    return M


def conditional_regret_target(cond, gamma: CostCoefficients, prediction) -> float:
    """Excess expected cost of a prediction over the best configuration.

    ``cond`` is a joint table over sign configurations (lexicographic order,
    +1 first); ties in the best response go to the lowest configuration
    index, i.e. the lexicographically first one.  The value is invariant to
    constant cost shifts.
    """
    l = gamma.l
    if l > 6:
        raise EnumerationScaleError("conditional regret enumeration is limited to l <= 6")
    table = _validate_cond(cond, l)
    M = _config_cost_matrix(losses._gamma_cells(gamma), l)
    c = M @ table
    return float(c[config_index(prediction)] - c.min())


@dataclass(frozen=True)
class SurrogateRegret:
    value: float
    exact: bool


def _surrogate_value_enum(weights, scores, tau):
    """Literal surrogate value sum_y' w(y') * phi_tau(u(y')) at given scores."""
    cfg = sign_configs(len(scores)).astype(np.float64)
    margins = cfg @ np.asarray(scores, dtype=np.float64)
    log_u = logsumexp(margins) - margins
    if tau == 0:
        phi = log_u
    else:
        phi = (1.0 - np.exp(-tau * log_u)) / tau
    return float(weights @ phi)


def _binary_inf(wp, wm, tau):
    """Closed-form infimum of the two-configuration surrogate (vectorized).

    wp/wm are the weights of the +1/-1 configurations.  The achievable
    configuration probabilities sweep the whole open simplex, so the infimum
    has an explicit form for every tau: the weighted entropy at tau = 0, a
    power-mean expression for tau in (0, 1), and min(wp, wm)/tau beyond
    (where the objective is concave in the probability and the infimum sits
    at the boundary).
    """
    wp = np.asarray(wp, dtype=np.float64)
    wm = np.asarray(wm, dtype=np.float64)
    if tau == 0:
        return xlogy(wp + wm, wp + wm) - xlogy(wp, wp) - xlogy(wm, wm)
    if tau < 1:
        with np.errstate(divide="ignore"):
            la = np.log(wp) / (1.0 - tau)
            lb = np.log(wm) / (1.0 - tau)
        power_mean = np.exp((1.0 - tau) * np.logaddexp(la, lb))
        return (wp + wm - power_mean) / tau
    return np.minimum(wp, wm) / tau


def conditional_regret_surrogate(
    cond,
    gamma: CostCoefficients,
    params: SurrogateParams,
    scores,
    *,
    starts: int = 32,
    steps: int = 500,
    seed=0,
) -> SurrogateRegret:
    """Conditional surrogate regret at the given scores.

    For a single label the infimum over scores is known in closed form for
    every tau, so the regret is exact.  For 2 or 3 labels it is estimated by
    multi-start first-order minimization over free score vectors; the result
    is a certified lower bound on the true regret (any located minimum can
    only overestimate the infimum).  Values are in the literal summation
    units, independent of the normalization mode.
    """
    l = gamma.l
    h = np.asarray(scores, dtype=np.float64)
    if h.shape != (l,):
        raise DataError(f"scores must have shape ({l},)")
    table = _validate_cond(cond, l)
    costs = prepare_costs(gamma, params)
    M = _config_cost_matrix(costs.cells, l)
    weights = costs.offset - M @ table

    if l == 1:
        value = _surrogate_value_enum(weights, h, params.tau)
        inf = float(_binary_inf(weights[0], weights[1], params.tau))
        return SurrogateRegret(value=max(0.0, value - inf), exact=True)
    if l > 3:
        raise EnumerationScaleError("numeric surrogate regret is limited to l <= 3")
    value = _surrogate_value_enum(weights, h, params.tau)
    best = _numeric_surrogate_minimum(
        weights[None, :], h[None, :], params.tau, starts=starts, steps=steps, seed=seed
    )[0]
    return SurrogateRegret(value=max(0.0, value - best), exact=False)


def _numeric_surrogate_minimum(weights, query_scores, tau, *, starts, steps, seed):
    """Multi-start descent on the conditional surrogate, batched over trials.

    ``weights`` is (T, 2^l); returns the best value found per trial.  The
    query scores, the origin, and (at tau = 0) the coordinatewise logistic
    optimum are included among the starts; the remaining starts are random.
    """
    T, n = weights.shape
    l = n.bit_length() - 1
    cfg = sign_configs(l).astype(np.float64)  # (n, l)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0xC0FFEE)))

    h0 = rng.uniform(-4.0, 4.0, size=(T, starts, l))
    h0[:, 0, :] = np.asarray(query_scores, dtype=np.float64)
    if starts > 1:
        h0[:, 1, :] = 0.0
    pos = cfg == 1
    wp = weights @ pos  # (T, l): total weight of configs with +1 at i
    wm = weights @ ~pos
    if tau == 0 and starts > 2:
        # coordinatewise logistic optimum (exact: the objective separates)
        with np.errstate(divide="ignore"):
            opt = 0.5 * (np.log(wp) - np.log(wm))
        h0[:, 2, :] = np.clip(np.nan_to_num(opt, posinf=30.0, neginf=-30.0), -30.0, 30.0)
    if tau > 0 and starts > 2:
        # saturated best-weight configuration; for tau >= 1 the infimum sits
        # at this boundary and plain descent approaches it only slowly
        h0[:, 2, :] = 30.0 * cfg[np.argmax(weights, axis=1)]
    if 0 < tau < 1 and starts > 3:
        # coordinatewise power-mean optimum (exact for a single label)
        with np.errstate(divide="ignore"):
            log_rho = (np.log(wp) - np.log(wm)) / (1.0 - tau)
        h0[:, 3, :] = np.clip(np.nan_to_num(0.5 * log_rho, posinf=30.0, neginf=-30.0), -30.0, 30.0)

    # Descend on the weight-normalized objective: same minimizers, but the
    # curvature is O(1), so the fixed step size is scale-free.
    scale = weights.sum(axis=1, keepdims=True)
    wn = weights / np.where(scale > 0, scale, 1.0)
    h = h0
    for step in range(steps):
        margins = np.einsum("tkl,nl->tkn", h, cfg)
        log_z = logsumexp(margins, axis=2, keepdims=True)
        s = np.exp(margins - log_z)  # (T, K, n)
        st = np.ones_like(s) if tau == 0 else s**tau
        mean_y = np.einsum("tkn,nl->tkl", s, cfg)
        # d/dh_i = -sum_y' w(y') s^tau (y'_i - E_s[y_i])
        grad = -(
            np.einsum("tn,tkn,nl->tkl", wn, st, cfg)
            - (wn[:, None, :] * st).sum(axis=2, keepdims=True) * mean_y
        )
        lr = 0.1 / (1.0 + 0.01 * step)
        h = h - lr * grad

    margins = np.einsum("tkl,nl->tkn", h, cfg)
    log_u = logsumexp(margins, axis=2, keepdims=True) - margins
    if tau == 0:
        phi = log_u
    else:
        phi = (1.0 - np.exp(-tau * log_u)) / tau
    values = np.einsum("tn,tkn->tk", weights, phi)
    return values.min(axis=1)


def check_regret_bound(
    l: int,
    tau: float,
    trials: int,
    seed,
    tolerance: float = 1e-9,
    slack: float = 1e-3,
    starts: int = 32,
    steps: int = 500,
) -> VerifyReport:
    """Target regret <= Gamma(surrogate regret) on random instances.

    Gamma(t) = 2*sqrt(S * n^tau * t) for tau in [0, 1) and tau * n^tau * t
    for tau >= 1, with S the exact sum of shifted costs over configuration
    pairs and n = 2^l.  At l = 1 both regrets are exact and the check is
    strict; at l in {2, 3} the surrogate regret is a certified lower bound
    (Gamma is nondecreasing, so only true violations can exceed the slack).
    """
    if l == 1:
        return _regret_bound_exact(tau, trials, seed, tolerance)
    if l in (2, 3):
        return _regret_bound_numeric(l, tau, trials, seed, slack, starts, steps)
    raise EnumerationScaleError("regret bound check supports l in {1, 2, 3}")


def _gamma_transfer(t, tau, cost_sum, n):
    t = np.maximum(t, 0.0)
    if tau < 1.0:
        return 2.0 * np.sqrt(cost_sum * (n**tau) * t)
    return tau * (n**tau) * t


def _random_bound_trial(rng, l):
    gamma = CostCoefficients(gamma=rng.uniform(-1.0, 1.0, size=(l, 4)))
    raw = rng.uniform(0.05, 1.0, size=1 << l)
    table = raw / raw.sum()
    table[-1] = 1.0 - table[:-1].sum()
    scores = rng.uniform(-5.0, 5.0, size=l)
    return gamma, table, scores


def _regret_bound_exact(tau, trials, seed, tolerance):
    params = SurrogateParams(tau=tau, offset_mode="exact_paper", normalization="raw")
    max_violation = -np.inf
    worst = None
    for t in range(trials):
        rng = _trial_rng(seed, t)
        gamma, table, scores = _random_bound_trial(rng, 1)
        costs = prepare_costs(gamma, params)
        M = _config_cost_matrix(costs.cells, 1)
        c = M @ table
        weights = costs.offset - c
        value = _surrogate_value_enum(weights, scores, tau)
        inf = float(_binary_inf(weights[0], weights[1], tau))
        sur_regret = max(0.0, value - inf)
        tgt_regret = float(c[config_index(sign0(scores))] - c.min())
        violation = tgt_regret - float(_gamma_transfer(sur_regret, tau, costs.offset, 2))
        if violation > max_violation:
            max_violation = violation
            worst = {"trial": t, "seed": (int(seed), t), "target_regret": tgt_regret,
                     "surrogate_regret": sur_regret}
    return VerifyReport(
        check="bound",
        trials=trials,
        tolerance=tolerance,
        max_violation=float(max_violation),
        worst=worst,
        info={"l": 1, "tau": tau, "branch": "exact"},
    )


def _regret_bound_numeric(l, tau, trials, seed, slack, starts, steps):
    params = SurrogateParams(tau=tau, offset_mode="exact_paper", normalization="raw")
    n = 1 << l
    all_weights = np.empty((trials, n))
    all_scores = np.empty((trials, l))
    tgt = np.empty(trials)
    offsets = np.empty(trials)
    values = np.empty(trials)
    for t in range(trials):
        rng = _trial_rng(seed, t)
        gamma, table, scores = _random_bound_trial(rng, l)
        costs = prepare_costs(gamma, params)
        M = _config_cost_matrix(costs.cells, l)
        c = M @ table
        all_weights[t] = costs.offset - c
        all_scores[t] = scores
        offsets[t] = costs.offset
        tgt[t] = c[config_index(sign0(scores))] - c.min()
        values[t] = _surrogate_value_enum(all_weights[t], scores, tau)

    best = _numeric_surrogate_minimum(
        all_weights, all_scores, tau, starts=starts, steps=steps, seed=seed
    )
    sur = np.maximum(0.0, values - best)
    violations = tgt - _gamma_transfer(sur, tau, offsets, n)
    worst_idx = int(np.argmax(violations))
    return VerifyReport(
        check="bound",
        trials=trials,
        tolerance=slack,
        max_violation=float(violations[worst_idx]),
        worst={
            "trial": worst_idx,
            "seed": (int(seed), worst_idx),
            "target_regret": float(tgt[worst_idx]),
            "surrogate_regret_lower_bound": float(sur[worst_idx]),
        },
        info={"l": l, "tau": tau, "branch": "lower_bound", "starts": starts, "steps": steps},
    )


# ---------------------------------------------------------------------------
# factorization / gradient / runtime checks
# ---------------------------------------------------------------------------


def check_factorization(
    l_max: int = 8,
    trials: int = 200,
    seed=0,
    taus=(0.0, 0.3, 0.5, 1.0, 2.0),
    tolerance: float = 1e-9,
) -> VerifyReport:
    """Factorized evaluation equals the brute-force double sum."""
    if l_max > 8:
        raise EnumerationScaleError("factorization check is limited to l <= 8")
    max_violation = 0.0
    worst = None
    count = 0
    for l in range(1, l_max + 1):
        for t in range(trials):
            rng = _trial_rng(seed, l * 100_000 + t)
            gamma = CostCoefficients(gamma=rng.uniform(-1.0, 1.0, size=(l, 4)))
            y = rng.choice([-1, 1], size=l).astype(np.int8)
            scores = rng.uniform(-3.0, 3.0, size=l)
            for tau in taus:
                params = SurrogateParams(
                    tau=tau, offset_mode="exact_paper", normalization="raw"
                )
                naive = losses.surrogate_naive(gamma, params, scores, y)
                fact = losses.surrogate_factorized(gamma, params, scores, y)
                rel = abs(fact - naive) / max(1.0, abs(naive))
                count += 1
                if rel > max_violation:
                    max_violation = rel
                    worst = {"l": l, "tau": tau, "trial": t, "seed": (int(seed), l * 100_000 + t)}
    return VerifyReport(
        check="factorization",
        trials=count,
        tolerance=tolerance,
        max_violation=max_violation,
        worst=worst,
        info={"l_max": l_max, "taus": list(taus)},
    )


def check_gradient(
    trials: int = 1000,
    seed=0,
    taus=(0.0, 0.5, 1.0),
    l_values=tuple(range(1, 9)),
    step: float = 1e-4,
    tolerance: float = 1e-5,
) -> VerifyReport:
    """Analytic score gradient vs central finite differences."""
    max_violation = 0.0
    worst = None
    cells = [(l, tau) for tau in taus for l in l_values]
    for t in range(trials):
        l, tau = cells[t % len(cells)]
        rng = _trial_rng(seed, t)
        gamma = CostCoefficients(gamma=rng.uniform(-1.0, 1.0, size=(l, 4)))
        y = rng.choice([-1, 1], size=l).astype(np.int8)
        scores = rng.uniform(-3.0, 3.0, size=l)
        params = SurrogateParams(tau=tau, offset_mode="sigma", normalization="per_config")
        grad = losses.surrogate_gradient(gamma, params, scores, y)
        for j in range(l):
            hp = scores.copy()
            hp[j] += step
            hm = scores.copy()
            hm[j] -= step
            fd = (
                losses.surrogate_factorized(gamma, params, hp, y)
                - losses.surrogate_factorized(gamma, params, hm, y)
            ) / (2.0 * step)
            rel = abs(grad[j] - fd) / max(1.0, abs(fd))
            if rel > max_violation:
                max_violation = rel
                worst = {"l": l, "tau": tau, "coord": j, "trial": t, "seed": (int(seed), t)}
    return VerifyReport(
        check="gradient",
        trials=trials,
        tolerance=tolerance,
        max_violation=max_violation,
        worst=worst,
        info={"step": step, "taus": list(taus), "l_values": list(l_values)},
    )


def check_runtime_scaling(
    l_list=(64, 256, 1024, 4096),
    repeats: int = 9,
    ratio_limit: float = 8.0,
    tau: float = 0.0,
    seed=0,
) -> VerifyReport:
    """Median per-evaluation time should grow at most linearly in l.

    The gate is time(4l)/time(l) <= ratio_limit for each consecutive
    quadrupling, which tolerates constant per-call overhead while still
    rejecting superlinear kernels.
    """
    l_list = tuple(int(v) for v in l_list)
    medians = {}
    for l in l_list:
        rng = _trial_rng(seed, l)
        gamma = CostCoefficients(gamma=rng.uniform(-1.0, 1.0, size=(l, 4)))
        params = SurrogateParams(tau=tau, offset_mode="sigma", normalization="per_config")
        costs = prepare_costs(gamma, params)
        y = rng.choice([-1, 1], size=(1, l)).astype(np.int8)
        scores = rng.uniform(-3.0, 3.0, size=(1, l))
        losses.batch_surrogate(costs, scores, y)  # warm up
        inner = 200 if l <= 512 else 50
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(inner):
                losses.batch_surrogate(costs, scores, y)
            samples.append((time.perf_counter() - t0) / inner)
        medians[l] = float(np.median(samples))

    ratios = {}
    max_ratio = 0.0
    for lo, hi in zip(l_list[:-1], l_list[1:]):
        r = medians[hi] / medians[lo]
        ratios[f"{lo}->{hi}"] = r
        max_ratio = max(max_ratio, r)
    return VerifyReport(
        check="runtime",
        trials=len(l_list) * repeats,
        tolerance=ratio_limit,
        max_violation=max_ratio,
        worst=None,
        info={
            "median_seconds": {str(k): v for k, v in medians.items()},
            "ratios": ratios,
        },
    )
