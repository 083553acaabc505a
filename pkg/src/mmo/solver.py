"""Training and lambda-selection strategies.

Four ways to pick the fractional multiplier lambda:

* ``lambda_oracle_bisect``: exact bisection on the sign of the best-in-class
  linearized risk, computed by enumerating tabular classifiers on a finite
  distribution.
* ``lambda_surrogate_bisect``: empirical bisection that trains a surrogate
  minimizer at each midpoint and branches on its empirical linearized risk
  against a tolerance band.
* ``lambda_cv_grid``: one trained model per grid point, scanned from
  lambda_max downward, keeping the best validation metric (ties go to the
  first, i.e. highest, lambda).
* ``train_ema``: a single pass that tracks lambda as an exponential moving
  average of the running batch metric, rebuilding the cost coefficients
  before every gradient step.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import verify
from .data import Dataset
from .errors import ConfigError, DegenerateDenominatorError, DivergenceError, NoValidCandidateError
from .losses import (
    CostCoefficients,
    SurrogateParams,
    batch_surrogate,
    gamma_from,
    prepare_costs,
    target_loss_batch,
)
from .metrics import MetricSpec, empirical_metric, pair_values
from .models import LinearModel, sign0

OPTIMIZERS = ("gd", "adaptive_moments")
STRATEGIES = ("oracle_bisect", "surrogate_bisect", "cv_grid", "ema")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 5
    seed: int = 0
    tau: float = 0.0
    optimizer: str = "adaptive_moments"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.tau < 0:
            raise ConfigError("tau must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("moment decays must lie in (0, 1)")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")


@dataclass(frozen=True)
class SearchConfig:
    lambda_min: float = 0.0
    lambda_max: float = 1.0
    epsilon: float | None = None
    epsilon_m: float = 1e-2
    strategy: str = "cv_grid"
    ema_gamma: float = 0.7
    ema_lambda0: float = 0.5

    def __post_init__(self):
        if not self.lambda_min < self.lambda_max:
            raise ConfigError("lambda_min must be < lambda_max")
        if self.epsilon is not None:
            if self.epsilon <= 0 or self.epsilon >= self.lambda_max - self.lambda_min:
                raise ConfigError("epsilon must lie in (0, lambda_max - lambda_min)")
        if self.epsilon_m <= 0:
            raise ConfigError("epsilon_m must be > 0")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if not 0 < self.ema_gamma < 1:
            raise ConfigError("ema_gamma must lie in (0, 1)")


@dataclass
class CandidateRecord:
    lam: float
    seed: int | None = None
    surrogate_loss: float | None = None
    target_risk: float | None = None
    val_metric: float | None = None
    branch: str | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "seed": self.seed,
            "surrogate_loss": self.surrogate_loss,
            "target_risk": self.target_risk,
            "val_metric": self.val_metric,
            "branch": self.branch,
            "degenerate": self.degenerate,
        }


@dataclass
class SearchReport:
    strategy: str
    chosen_lambda: float
    iterations: int
    termination_reason: str
    candidates: list[CandidateRecord] = field(default_factory=list)
    lambda_trace: list[dict] | None = None
    epsilon: float | None = None
    epsilon_m: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "chosen_lambda": self.chosen_lambda,
            "iterations": self.iterations,
            "termination_reason": self.termination_reason,
            "candidates": [c.to_dict() for c in self.candidates],
            "lambda_trace": self.lambda_trace,
            "epsilon": self.epsilon,
            "epsilon_m": self.epsilon_m,
            "details": self.details,
        }


def max_threads() -> int:
    """Parallelism cap from MMO_THREADS (default 1, i.e. serial)."""
    raw = os.environ.get("MMO_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class _Optimizer:
    """First-order updates for the (weights, bias) pair."""

    def __init__(self, cfg: TrainConfig, shapes):
        self.cfg = cfg
        self.t = 0
        if cfg.optimizer == "adaptive_moments":
            self.m = [np.zeros(s) for s in shapes]
            self.v = [np.zeros(s) for s in shapes]

    def step(self, params, grads):
        cfg = self.cfg
        self.t += 1
        if cfg.optimizer == "gd":
            for p, g in zip(params, grads):
                p -= cfg.learning_rate * g
            return
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            p -= cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def _train_loop(ds: Dataset, cfg: TrainConfig, batch_fn, epoch_losses=None) -> LinearModel:
    """Mini-batch first-order minimization from an all-zero model.

    ``batch_fn(scores, y_batch, step) -> (per_instance_loss, score_grads)``.
    The shuffle order is drawn from a generator seeded with cfg.seed, so runs
    are bit-reproducible.  All-zero initialization plus sign(0) = +1 makes
    the initial predictor all-positive.
    """
    if ds.m == 0:
        raise ConfigError("training dataset is empty")
    W = np.zeros((ds.l, ds.d))
    b = np.zeros(ds.l)
    opt = _Optimizer(cfg, [W.shape, b.shape])
    rng = np.random.default_rng(cfg.seed)
    step = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(ds.m)
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, ds.m, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            Xb = ds.X[idx]
            Yb = ds.Y[idx]
            scores = np.asarray(Xb @ W.T) + b
            if not np.isfinite(scores).all():
                raise DivergenceError(epoch, bi)
            loss_vec, gscores = batch_fn(scores, Yb, step)
            mean_loss = float(loss_vec.mean())
            if not math.isfinite(mean_loss) or not np.isfinite(gscores).all():
                raise DivergenceError(epoch, bi)
            gs = gscores / len(idx)
            gW = np.asarray(Xb.T @ gs).T
            gb = gs.sum(axis=0)
            opt.step([W, b], [gW, gb])
            epoch_loss += mean_loss * len(idx)
            step += 1
        if epoch_losses is not None:
            epoch_losses.append(epoch_loss / ds.m)
    return LinearModel(weights=W, bias=b)


def _surrogate_params(cfg: TrainConfig) -> SurrogateParams:
    return SurrogateParams(tau=cfg.tau, offset_mode="sigma", normalization="per_config")


def train_surrogate(
    train: Dataset, gamma: CostCoefficients, cfg: TrainConfig, epoch_losses=None
) -> LinearModel:
    """Minimize the factorized surrogate for a fixed cost vector."""
    if gamma.l != train.l:
        raise ConfigError(f"gamma has {gamma.l} labels, dataset has {train.l}")
    costs = prepare_costs(gamma, _surrogate_params(cfg))
    return _train_loop(
        train,
        cfg,
        lambda scores, yb, step: batch_surrogate(costs, scores, yb),
        epoch_losses=epoch_losses,
    )


def train_logistic(train: Dataset, cfg: TrainConfig, epoch_losses=None) -> LinearModel:
    """Plain per-label logistic baseline under the same training budget."""

    def batch_fn(scores, yb, step):
        margins = yb * scores
        loss = np.logaddexp(0.0, -margins).sum(axis=1)
        grad = -yb / (1.0 + np.exp(margins))
        return loss, grad

    return _train_loop(train, cfg, batch_fn, epoch_losses=epoch_losses)


def mean_target_risk(gamma: CostCoefficients, model: LinearModel, ds: Dataset) -> float:
    """Empirical mean of the linearized cost at the model's sign predictions."""
    preds = model.predict_matrix(ds.X)
    return float(target_loss_batch(gamma, preds, ds.Y).mean())


def mean_surrogate_loss(gamma: CostCoefficients, cfg: TrainConfig, model: LinearModel, ds: Dataset) -> float:
    costs = prepare_costs(gamma, _surrogate_params(cfg))
    loss, _ = batch_surrogate(costs, model.scores_matrix(ds.X), ds.Y)
    return float(loss.mean())


def lambda_oracle_bisect(dist, spec: MetricSpec, cfg: SearchConfig) -> tuple[float, SearchReport]:
    """Bisection on the exact sign of the best-in-class linearized risk."""
    a, b = verify.enumerate_risks(dist, spec)
    eps = cfg.epsilon if cfg.epsilon is not None else 1e-3
    lo, hi = cfg.lambda_min, cfg.lambda_max
    lam = 0.5 * (lo + hi)
    records = []
    while hi - lo > eps:
        lam = 0.5 * (lo + hi)
        risk = verify.min_linearized_risk(a, b, lam)
        if risk > 0:
            hi = lam
            branch = "above_optimum"
        else:
            lo = lam
            branch = "at_or_below_optimum"
        records.append(CandidateRecord(lam=lam, target_risk=risk, branch=branch))
    report = SearchReport(
        strategy="oracle_bisect",
        chosen_lambda=lam,
        iterations=len(records),
        termination_reason="interval_converged",
        candidates=records,
        epsilon=eps,
    )
    return lam, report


def _beta_upper_estimate(ds: Dataset, spec: MetricSpec) -> float:
    """Cheap upper proxy for the largest per-instance denominator value,
    probing the all-positive and all-negative constant predictors."""
    best = 0.0
    for const in (1, -1):
        preds = np.full_like(ds.Y, const)
        vals = pair_values(spec.beta, preds, ds.Y).sum(axis=1)
        if len(vals):
            best = max(best, float(vals.max()))
    return best if best > 0 else 1.0


def lambda_surrogate_bisect(
    train: Dataset,
    spec: MetricSpec,
    train_cfg: TrainConfig,
    search_cfg: SearchConfig,
) -> tuple[LinearModel, SearchReport]:
    """Empirical bisection: train at each midpoint, branch on the band test.

    Returns the midpoint model immediately once its empirical linearized
    risk lands inside [-epsilon_m, epsilon_m]; if the interval shrinks below
    epsilon first, the last midpoint model is returned (training one more
    model at the final midpoint would exceed the advertised candidate
    count).
    """
    eps_m = search_cfg.epsilon_m
    eps = search_cfg.epsilon
    if eps is None:
        eps = eps_m / (2.0 * _beta_upper_estimate(train, spec))
        eps = min(eps, 0.5 * (search_cfg.lambda_max - search_cfg.lambda_min))
    lo, hi = search_cfg.lambda_min, search_cfg.lambda_max
    records = []
    model = None
    lam = 0.5 * (lo + hi)
    while hi - lo > eps:
        lam = 0.5 * (lo + hi)
        gamma = gamma_from(spec.alpha, spec.beta, lam)
        cand_cfg = replace(train_cfg, seed=train_cfg.seed ^ len(records))
        model = train_surrogate(train, gamma, cand_cfg)
        risk = mean_target_risk(gamma, model, train)
        rec = CandidateRecord(
            lam=lam,
            seed=cand_cfg.seed,
            surrogate_loss=mean_surrogate_loss(gamma, cand_cfg, model, train),
            target_risk=risk,
        )
        if risk > eps_m:
            hi = lam
            rec.branch = "risk_above_band"
        elif risk < -eps_m:
            lo = lam
            rec.branch = "risk_below_band"
        else:
            rec.branch = "band_hit"
            records.append(rec)
            report = SearchReport(
                strategy="surrogate_bisect",
                chosen_lambda=lam,
                iterations=len(records),
                termination_reason="band_hit",
                candidates=records,
                epsilon=eps,
                epsilon_m=eps_m,
            )
            return model, report
        records.append(rec)
    if model is None:
        # interval narrower than epsilon on entry; train once at the midpoint
        gamma = gamma_from(spec.alpha, spec.beta, lam)
        model = train_surrogate(train, gamma, train_cfg)
        records.append(CandidateRecord(lam=lam, seed=train_cfg.seed, branch="single_midpoint"))
    report = SearchReport(
        strategy="surrogate_bisect",
        chosen_lambda=lam,
        iterations=len(records),
        termination_reason="interval_exhausted",
        candidates=records,
        epsilon=eps,
        epsilon_m=eps_m,
    )
    return model, report


def cv_grid_points(search_cfg: SearchConfig) -> list[float]:
    """The scan points lambda_max, lambda_max - eps, ... (see grid contract)."""
    if search_cfg.epsilon is None:
        raise ConfigError("cv_grid requires an explicit epsilon step")
    span = search_cfg.lambda_max - search_cfg.lambda_min
    count = int(math.floor(span / search_cfg.epsilon + 1e-9)) + 1
    return [
        max(search_cfg.lambda_min, search_cfg.lambda_max - i * search_cfg.epsilon)
        for i in range(count)
    ]


def lambda_cv_grid(
    train: Dataset,
    validation: Dataset,
    spec: MetricSpec,
    train_cfg: TrainConfig,
    search_cfg: SearchConfig,
) -> tuple[LinearModel, SearchReport]:
    """Grid scan from lambda_max downward, keeping the best validation metric.

    Ties are broken by strict improvement, so the first (highest) lambda
    wins.  Candidates whose validation metric is degenerate score -inf and
    are recorded as such; if every candidate is degenerate the search fails.
    """
    if validation.m == 0:
        raise ConfigError("validation dataset is empty")
    lams = cv_grid_points(search_cfg)

    def run_candidate(i_lam):
        i, lam = i_lam
        gamma = gamma_from(spec.alpha, spec.beta, lam)
        cand_cfg = replace(train_cfg, seed=train_cfg.seed ^ i)
        model = train_surrogate(train, gamma, cand_cfg)
        rec = CandidateRecord(
            lam=lam,
            seed=cand_cfg.seed,
            surrogate_loss=mean_surrogate_loss(gamma, cand_cfg, model, train),
            target_risk=mean_target_risk(gamma, model, train),
        )
        try:
            rec.val_metric = empirical_metric(
                validation.Y, model.predict_matrix(validation.X), spec
            )
        except DegenerateDenominatorError:
            rec.val_metric = None
            rec.degenerate = True
        return model, rec

    jobs = list(enumerate(lams))
    workers = min(max_threads(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_candidate, jobs))
    else:
        results = [run_candidate(j) for j in jobs]

    best_model = None
    best_rec = None
    best_val = -math.inf
    for model, rec in results:
        if rec.val_metric is not None and rec.val_metric > best_val:
            best_val = rec.val_metric
            best_model = model
            best_rec = rec
    records = [rec for _, rec in results]
    if best_model is None:
        raise NoValidCandidateError("no valid candidate: all grid points degenerate")
    report = SearchReport(
        strategy="cv_grid",
        chosen_lambda=best_rec.lam,
        iterations=len(records),
        termination_reason="grid_exhausted",
        candidates=records,
        epsilon=search_cfg.epsilon,
        details={"best_val_metric": best_val},
    )
    return best_model, report


def train_ema(
    train: Dataset,
    spec: MetricSpec,
    train_cfg: TrainConfig,
    search_cfg: SearchConfig,
) -> tuple[LinearModel, SearchReport]:
    """Single-pass training with the moving-average lambda update.

    Before each parameter update: evaluate the batch's micro metric at the
    current predictions, fold it into lambda (skipped when the batch
    denominator is degenerate), rebuild the cost coefficients, then take one
    surrogate gradient step with the fresh lambda.  Batch metrics always use
    micro averaging; macro/instance ratios are too unstable on small batches
    to steer lambda.
    """
    batch_spec = spec.with_averaging("micro")
    g = search_cfg.ema_gamma
    state = {"lam": search_cfg.ema_lambda0}
    trace: list[dict] = []

    def batch_fn(scores, yb, step):
        preds = sign0(scores)
        try:
            metric = empirical_metric(yb, preds, batch_spec)
            state["lam"] = g * state["lam"] + (1.0 - g) * metric
        except DegenerateDenominatorError:
            metric = None
        trace.append({"step": step, "lambda": state["lam"], "batch_metric": metric})
        gamma = gamma_from(spec.alpha, spec.beta, state["lam"])
        costs = prepare_costs(gamma, _surrogate_params(train_cfg))
        return batch_surrogate(costs, scores, yb)

    model = _train_loop(train, train_cfg, batch_fn)
    report = SearchReport(
        strategy="ema",
        chosen_lambda=state["lam"],
        iterations=len(trace),
        termination_reason="single_pass_complete",
        lambda_trace=trace,
        details={"ema_gamma": g, "lambda0": search_cfg.ema_lambda0},
    )
    return model, report
