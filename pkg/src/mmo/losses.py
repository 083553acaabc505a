"""Cost-sensitive target loss and its comp-sum surrogate family.

The target loss is a sum of per-label four-coefficient terms on sign
predictions (the linearized form lambda*beta - alpha of a fractional
metric).  The surrogate weights every candidate label configuration y' by
(S - shifted_cost(y', y)) and applies the transform ``phi_tau`` to a
softmax-style normalizer.  Because the cost is additive across labels, the
2^l configuration sums collapse onto per-label marginals; the collapsed form
is evaluated by the kernel backends in O(l).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import OracleScaleError, OverflowGuardError, ShapeError
from .metrics import MetricCoefficients
from .models import sign_configs, validate_labels

OFFSET_MODES = ("exact_paper", "sigma")
NORMALIZATION_MODES = ("raw", "per_config")

#: surrogate_naive refuses label counts above this
_NAIVE_GUARD = 12
#: raw normalization / exact offsets refuse label counts above this
_POW2_GUARD = 30


@dataclass(frozen=True)
class CostCoefficients:
    """Per-label cost 4-tuples gamma_k, typically lambda*beta_k - alpha_k."""

    gamma: np.ndarray  # (l, 4) in (hy, y, h, 1) order
    lam: float | None = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim != 2 or g.shape[1] != 4:
            raise ShapeError(f"gamma must be (l, 4), got {g.shape}")
        if not np.isfinite(g).all():
            raise ValueError("gamma entries must be finite")
        object.__setattr__(self, "gamma", g)

    @property
    def l(self) -> int:
        return self.gamma.shape[0]


def gamma_from(alpha: MetricCoefficients, beta: MetricCoefficients, lam: float) -> CostCoefficients:
    """Componentwise lambda*beta - alpha."""
    a = alpha.as_array()
    b = beta.as_array()
    if a.shape != b.shape:
        raise ShapeError(f"alpha shape {a.shape} != beta shape {b.shape}")
    return CostCoefficients(gamma=lam * b - a, lam=float(lam))


def target_loss(gamma: CostCoefficients, prediction, y) -> float:
    """Sum over labels of gamma1*h*y + gamma2*y + gamma3*h + gamma4."""
    h = validate_labels(prediction, gamma.l).astype(np.float64)
    yv = validate_labels(y, gamma.l).astype(np.float64)
    g = gamma.gamma
    return float((g[:, 0] * h * yv + g[:, 1] * yv + g[:, 2] * h + g[:, 3]).sum())


def target_loss_batch(gamma: CostCoefficients, predictions, ys) -> np.ndarray:
    """target_loss for (m, l) arrays of predictions and labels, shape (m,)."""
    h = np.asarray(predictions, dtype=np.float64)
    yv = np.asarray(ys, dtype=np.float64)
    if h.shape != yv.shape or h.ndim != 2 or h.shape[1] != gamma.l:
        raise ShapeError(f"bad shapes {h.shape} / {yv.shape} for l={gamma.l}")
    g = gamma.gamma
    return (g[:, 0] * h * yv + g[:, 1] * yv + g[:, 2] * h + g[:, 3]).sum(axis=1)


def phi_tau(tau: float, u):
    """Comp-sum transform: log(u) at tau = 0, (1 - u^-tau)/tau for tau > 0.

    Strictly increasing in u on (0, inf) for every tau >= 0 and continuous in
    tau (the tau -> 0 limit of the power branch is log u).  Applied to the
    normalizer u = 1/s of a configuration's softmax probability s, the loss
    term is strictly decreasing in s.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any(u_arr <= 0):
        raise ValueError("phi_tau requires u > 0")
    if tau == 0:
        out = np.log(u_arr)
    else:
        out = (1.0 - u_arr ** (-tau)) / tau
    return float(out) if np.isscalar(u) or u_arr.ndim == 0 else out


@dataclass(frozen=True)
class SurrogateParams:
    """Knobs of the comp-sum surrogate.

    ``offset_mode`` chooses the weight offset S: ``exact_paper`` is the full
    sum of shifted costs over all 4^l configuration pairs (exponential in l,
    for small-scale verification only), ``sigma`` the per-label cell sum,
    which still dominates every single shifted cost and keeps all weights
    nonnegative.  ``normalization`` keeps or divides out the global 2^(l-2)
    factor of the collapsed sum.  ``nonneg_shift`` is the constant added to
    the cost to make it nonnegative; None selects sum_k sum_j |gamma_k^j|.
    """

    tau: float = 0.0
    offset_mode: str = "sigma"
    normalization: str = "per_config"
    nonneg_shift: float | None = None

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.offset_mode not in OFFSET_MODES:
            raise ValueError(f"offset_mode must be one of {OFFSET_MODES}")
        if self.normalization not in NORMALIZATION_MODES:
            raise ValueError(f"normalization must be one of {NORMALIZATION_MODES}")
        if self.nonneg_shift is not None and self.nonneg_shift < 0:
            raise ValueError("nonneg_shift must be >= 0")


def _gamma_cells(gamma: CostCoefficients) -> np.ndarray:
    """Raw cost cells, shape (l, 2, 2): axes are prediction sign, label sign
    with index 0 = +1."""
    g = gamma.gamma
    signs = np.array([1.0, -1.0])
    h = signs[None, :, None]
    y = signs[None, None, :]
    return (
        g[:, 0, None, None] * h * y
        + g[:, 1, None, None] * y
        + g[:, 2, None, None] * h
        + g[:, 3, None, None]
    )


@dataclass(frozen=True)
class ShiftedCosts:
    """Precomputed shifted cost cells plus offset for one (gamma, params)."""

    cells: np.ndarray  # (l, 2, 2), every entry >= 0 under the default shift
    offset: float  # the weight offset S
    shift: float  # total constant added to the configuration cost
    tau: float
    normalization: str

    @property
    def l(self) -> int:
        return self.cells.shape[0]

    def config_cost(self, y_prime, y) -> float:
        """Shifted cost of predicting configuration y_prime when truth is y."""
        hp = (validate_labels(y_prime, self.l) == -1).astype(np.intp)
        yi = (validate_labels(y, self.l) == -1).astype(np.intp)
        return float(self.cells[np.arange(self.l), hp, yi].sum())

    def marginals_for(self, ys) -> tuple[np.ndarray, np.ndarray]:
        """Per-instance cost marginals (cp, cm) for an (m, l) label array.

        cp[i, k] = S/l - cell(k, +1, y_ik) and cm likewise at prediction -1;
        summed over k these recover S - shifted_cost(y', y) for any y'.
        """
        yi = (np.asarray(ys) == -1).astype(np.intp)
        if yi.ndim != 2 or yi.shape[1] != self.l:
            raise ShapeError(f"labels must be (m, {self.l})")
        base = self.offset / self.l
        lab = np.arange(self.l)[None, :]
        cp = base - self.cells[:, 0, :][lab, yi]
        cm = base - self.cells[:, 1, :][lab, yi]
        return cp, cm


def prepare_costs(gamma: CostCoefficients, params: SurrogateParams) -> ShiftedCosts:
    """Shift the cost cells to nonnegativity and fix the weight offset.

    The shift is distributed across labels in proportion to each label's own
    coefficient magnitude, which keeps every individual cell nonnegative (not
    just the summed configuration cost); that per-cell nonnegativity is what
    makes the sigma offset dominate the maximal shifted cost.
    """
    cells = _gamma_cells(gamma)
    per_label_sum = np.abs(gamma.gamma).sum(axis=1)
    total = float(per_label_sum.sum())
    shift = total if params.nonneg_shift is None else float(params.nonneg_shift)
    if total > 0:
        cells = cells + (shift * per_label_sum / total)[:, None, None]
    else:
        cells = cells + shift / gamma.l
    sigma = float(cells.sum())
    if params.offset_mode == "sigma":
        offset = sigma
    else:
        if gamma.l > _POW2_GUARD:
            raise OverflowGuardError(
                f"exact_paper offset needs 4^{gamma.l - 1}; guard is l <= {_POW2_GUARD}"
            )
        offset = float(4.0 ** (gamma.l - 1)) * sigma
    return ShiftedCosts(
        cells=cells,
        offset=offset,
        shift=shift,
        tau=params.tau,
        normalization=params.normalization,
    )


def cost_offset(gamma: CostCoefficients, params: SurrogateParams) -> float:
    """The weight offset S for the given mode (see SurrogateParams)."""
    return prepare_costs(gamma, params).offset


def _norm_factor(costs: ShiftedCosts) -> float:
    if costs.normalization == "per_config":
        return 1.0
    if costs.l > _POW2_GUARD:
        raise OverflowGuardError(
            f"raw normalization needs 2^{costs.l - 2}; guard is l <= {_POW2_GUARD}"
        )
    return float(2.0 ** (costs.l - 2))


def batch_surrogate(costs: ShiftedCosts, scores, ys) -> tuple[np.ndarray, np.ndarray]:
    """Factorized surrogate loss and score gradient for a batch.

    ``scores`` and ``ys`` are (m, l); returns per-instance losses (m,) and
    gradients (m, l), scaled according to the normalization mode.
    """
    h = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if h.shape[1] != costs.l:
        raise ShapeError(f"scores must be (m, {costs.l})")
    if not np.isfinite(h).all():
        raise ValueError("scores must be finite")
    cp, cm = costs.marginals_for(np.atleast_2d(ys))
    loss, grad = kernels.batch_loss_grad(cp, cm, h, costs.tau)
    factor = _norm_factor(costs)
    if factor != 1.0:
        loss = loss * factor
        grad = grad * factor
    return loss, grad


def surrogate_factorized(gamma: CostCoefficients, params: SurrogateParams, scores, y) -> float:
    """Exact surrogate value for one instance via the O(l) collapsed form."""
    costs = prepare_costs(gamma, params)
    loss, _ = batch_surrogate(costs, np.asarray(scores)[None, :], np.asarray(y)[None, :])
    return float(loss[0])


def surrogate_gradient(gamma: CostCoefficients, params: SurrogateParams, scores, y) -> np.ndarray:
    """Exact gradient of surrogate_factorized in the scores, shape (l,)."""
    costs = prepare_costs(gamma, params)
    _, grad = batch_surrogate(costs, np.asarray(scores)[None, :], np.asarray(y)[None, :])
    return grad[0]


def surrogate_naive(gamma: CostCoefficients, params: SurrogateParams, scores, y) -> float:
    """Ground-truth surrogate by direct double summation over configurations.

    Enumerates all 2^l weight terms and, inside each, the full 2^l-term
    normalizer, exactly as the surrogate is defined.  Intended as the oracle
    for the factorized path; refuses l > 12.
    """
    if gamma.l > _NAIVE_GUARD:
        raise OracleScaleError(f"naive surrogate is limited to l <= {_NAIVE_GUARD}")
    costs = prepare_costs(gamma, params)
    h = np.asarray(scores, dtype=np.float64)
    if h.shape != (gamma.l,):
        raise ShapeError(f"scores must have shape ({gamma.l},)")
    yv = validate_labels(y, gamma.l)

    cfg = sign_configs(gamma.l).astype(np.float64)
    cfg_idx = (cfg < 0).astype(np.intp)
    y_idx = (yv < 0).astype(np.intp)
    lab = np.arange(gamma.l)
    # cost_rows[k, j]: shifted cost of label k at prediction sign j, true y_k
    cost_rows = costs.cells[lab, :, y_idx]
    cfg_costs = cost_rows[lab[None, :], cfg_idx].sum(axis=1)
    weights = costs.offset - cfg_costs

    margins = cfg @ h
    u = np.exp(margins[None, :] - margins[:, None]).sum(axis=1)
    value = float(weights @ phi_tau(params.tau, u))
    if params.normalization == "per_config":
        value /= 2.0 ** (gamma.l - 2)
    return value
