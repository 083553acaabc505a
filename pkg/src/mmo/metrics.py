"""Generalized linear-fractional metrics over sign predictions.

A metric is a ratio of two linear functionals of the per-label confusion
statistics.  Each side is encoded as one four-coefficient tuple per label,
acting on the products (h*y, y, h, 1) of sign-valued predictions h and labels
y.  Micro, macro and instance averaging differ only in where the ratio is
taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominatorError, ShapeError, UnknownPresetError

AVERAGING_MODES = ("micro", "macro", "instance")

#: Tolerance below which a denominator counts as degenerate.
_DEN_TOL = 0.0


@dataclass(frozen=True)
class FourTuple:
    """Coefficients (c_hy, c_y, c_h, c_1) of a per-label bilinear form."""

    c_hy: float
    c_y: float
    c_h: float
    c_1: float

    def __post_init__(self):
        for v in (self.c_hy, self.c_y, self.c_h, self.c_1):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coefficient {v!r}")

    def evaluate(self, h: int, y: int) -> float:
        """Value at sign-valued prediction h and label y (both in {+1,-1})."""
        _check_sign(h)
        _check_sign(y)
        return self.c_hy * h * y + self.c_y * y + self.c_h * h + self.c_1

    def as_array(self) -> np.ndarray:
        return np.array([self.c_hy, self.c_y, self.c_h, self.c_1], dtype=np.float64)


def _check_sign(v):
    if v != 1 and v != -1:
        raise ValueError(f"expected a sign value in {{+1,-1}}, got {v!r}")


@dataclass(frozen=True)
class MetricCoefficients:
    """One FourTuple per label (the alpha or beta side of a metric)."""

    per_label: tuple[FourTuple, ...]

    def __len__(self):
        return len(self.per_label)

    def as_array(self) -> np.ndarray:
        """Coefficients as an (l, 4) float array in (hy, y, h, 1) order."""
        return np.array([t.as_array() for t in self.per_label], dtype=np.float64)

    @classmethod
    def uniform(cls, tup: FourTuple, l: int) -> "MetricCoefficients":
        return cls(per_label=(tup,) * l)

    @classmethod
    def from_array(cls, arr) -> "MetricCoefficients":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise ShapeError(f"expected an (l, 4) coefficient array, got {arr.shape}")
        return cls(per_label=tuple(FourTuple(*row) for row in arr))


@dataclass(frozen=True)
class MetricSpec:
    """A named metric: numerator/denominator coefficients plus averaging mode."""

    name: str
    l: int
    alpha: MetricCoefficients
    beta: MetricCoefficients
    averaging: str

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("label count must be >= 1")
        if len(self.alpha) != self.l or len(self.beta) != self.l:
            raise ShapeError(
                f"coefficient length ({len(self.alpha)}, {len(self.beta)}) "
                f"does not match label count {self.l}"
            )
        if self.averaging not in AVERAGING_MODES:
            raise ValueError(f"unknown averaging mode {self.averaging!r}")

    def with_averaging(self, averaging: str) -> "MetricSpec":
        return MetricSpec(self.name, self.l, self.alpha, self.beta, averaging)


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-label integer confusion counts for a sample of m instances."""

    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    @property
    def m(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.tn[0] + self.fn[0]) if len(self.tp) else 0

    def totals(self) -> tuple[int, int, int, int]:
        """(tp, fp, tn, fn) summed over labels."""
        return (int(self.tp.sum()), int(self.fp.sum()), int(self.tn.sum()), int(self.fn.sum()))


def ell_mu_k(mu: FourTuple, h_k: int, y_k: int) -> float:
    """Per-label metric term mu1*h*y + mu2*y + mu3*h + mu4."""
    return mu.evaluate(h_k, y_k)


# Confusion indicators expressed in the (hy, y, h, 1) basis.  Derived from the
# 0/1 encodings hbar = (h+1)/2, ybar = (y+1)/2:
#   TP = hbar*ybar, FP = hbar*(1-ybar), FN = (1-hbar)*ybar, TN = (1-hbar)*(1-ybar)
_TP = np.array([0.25, 0.25, 0.25, 0.25])
_FP = np.array([-0.25, -0.25, 0.25, 0.25])
_FN = np.array([-0.25, 0.25, -0.25, 0.25])
_TN = np.array([0.25, -0.25, -0.25, 0.25])
_ONE = np.array([0.0, 0.0, 0.0, 1.0])

# numerator / denominator of each preset as combinations of the indicators
_PRESETS = {
    "f1": (2 * _TP, 2 * _TP + _FP + _FN),
    "jaccard": (_TP, _TP + _FP + _FN),
    "precision": (_TP, _TP + _FP),
    "accuracy": (_TP + _TN, _ONE),
}


def preset(name: str, l: int, averaging: str = "micro") -> MetricSpec:
    """Build a MetricSpec for one of the named presets.

    The coefficient tuples are derived from the confusion-count identities
    (e.g. jaccard = TP / (TP + FP + FN)) rather than written out, so they are
    correct by construction for every (h, y) sign combination.
    """
    if name not in _PRESETS:
        raise UnknownPresetError(
            f"unknown metric preset {name!r}; choose from {sorted(_PRESETS)}"
        )
    if l < 1:
        raise ValueError("label count must be >= 1")
    num, den = _PRESETS[name]
    alpha = MetricCoefficients.uniform(FourTuple(*num), l)
    beta = MetricCoefficients.uniform(FourTuple(*den), l)
    return MetricSpec(name=name, l=l, alpha=alpha, beta=beta, averaging=averaging)


def _as_sign_matrix(arr, l=None) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"expected an (m, l) array of sign labels, got shape {arr.shape}")
    if l is not None and arr.shape[1] != l:
        raise ShapeError(f"label dimension {arr.shape[1]} != expected {l}")
    if not np.isin(arr, (-1, 1)).all():
        raise ValueError("label entries must all be +1 or -1")
    return arr.astype(np.float64)


def pair_values(coeffs: MetricCoefficients, y_pred, y_true) -> np.ndarray:
    """Per-(instance, label) values of the coefficient form, shape (m, l)."""
    c = coeffs.as_array()
    h = _as_sign_matrix(y_pred, len(coeffs))
    y = _as_sign_matrix(y_true, len(coeffs))
    if h.shape != y.shape:
        raise ShapeError(f"prediction shape {h.shape} != label shape {y.shape}")
    return c[:, 0] * h * y + c[:, 1] * y + c[:, 2] * h + c[:, 3]


def confusion_counts(y_true, y_pred) -> ConfusionCounts:
    """Per-label TP/FP/TN/FN counts from sign-valued labels and predictions."""
    y = _as_sign_matrix(y_true)
    h = _as_sign_matrix(y_pred, y.shape[1])
    if h.shape != y.shape:
        raise ShapeError(f"prediction shape {h.shape} != label shape {y.shape}")
    hb = (h + 1) / 2
    yb = (y + 1) / 2
    tp = (hb * yb).sum(axis=0)
    fp = (hb * (1 - yb)).sum(axis=0)
    fn = ((1 - hb) * yb).sum(axis=0)
    tn = ((1 - hb) * (1 - yb)).sum(axis=0)
    as_int = lambda a: np.rint(a).astype(np.int64)
    return ConfusionCounts(tp=as_int(tp), fp=as_int(fp), tn=as_int(tn), fn=as_int(fn))


def _ratio_or_none(num, den, scope, index, skip_degenerate):
    if den <= _DEN_TOL:
        if skip_degenerate:
            return None
        raise DegenerateDenominatorError(scope, index)
    return num / den


def empirical_metric(y_true, y_pred, spec: MetricSpec, *, skip_degenerate: bool = False) -> float:
    """Empirical metric value of predictions against labels.

    ``y_true`` and ``y_pred`` are (m, l) arrays with entries in {+1,-1}.
    With ``skip_degenerate`` the macro/instance averages drop ratios whose
    denominator is <= 0 instead of raising; the micro ratio always raises.
    """
    a = pair_values(spec.alpha, y_pred, y_true)
    b = pair_values(spec.beta, y_pred, y_true)
    if spec.averaging == "micro":
        den = b.sum()
        if den <= _DEN_TOL:
            raise DegenerateDenominatorError("micro")
        return float(a.sum() / den)
    if spec.averaging == "macro":
        ratios = [
            _ratio_or_none(a[:, k].sum(), b[:, k].sum(), "label", k, skip_degenerate)
            for k in range(spec.l)
        ]
    else:  # instance
        ratios = [
            _ratio_or_none(a[i].sum(), b[i].sum(), "instance", i, skip_degenerate)
            for i in range(a.shape[0])
        ]
    kept = [r for r in ratios if r is not None]
    if not kept:
        raise DegenerateDenominatorError(spec.averaging)
    return float(np.mean(kept))


def expected_pair_values(coeffs: MetricCoefficients, predictions, marginal_pos) -> np.ndarray:
    """Per-label conditional expectations of the coefficient form.

    ``predictions`` is an (l,) sign vector and ``marginal_pos`` the (l,)
    vector of P(y_k = +1 | x).  The form is linear in y_k, so only the label
    marginals matter: E[y_k] = 2 p_k - 1.
    """
    c = coeffs.as_array()
    h = np.asarray(predictions, dtype=np.float64)
    ybar = 2.0 * np.asarray(marginal_pos, dtype=np.float64) - 1.0
    return c[:, 0] * h * ybar + c[:, 1] * ybar + c[:, 2] * h + c[:, 3]


def population_metric(dist, classifier, spec: MetricSpec, *, skip_degenerate: bool = False) -> float:
    """Population metric of a tabular classifier under a finite distribution.

    Expectations are computed exactly by summing over the support points and
    their conditional label tables.  Micro and instance averaging share the
    ratio-of-expectations form; macro averages per-label expectation ratios.
    """
    ea = np.zeros(spec.l)
    eb = np.zeros(spec.l)
    for point in dist.points:
        h = classifier.predict(point.x_id)
        p = point.marginal_pos()
        ea += point.weight * expected_pair_values(spec.alpha, h, p)
        eb += point.weight * expected_pair_values(spec.beta, h, p)
    if spec.averaging == "macro":
        ratios = [
            _ratio_or_none(ea[k], eb[k], "label", k, skip_degenerate) for k in range(spec.l)
        ]
        kept = [r for r in ratios if r is not None]
        if not kept:
            raise DegenerateDenominatorError("macro")
        return float(np.mean(kept))
    den = eb.sum()
    if den <= _DEN_TOL:
        raise DegenerateDenominatorError("micro")
    return float(ea.sum() / den)
