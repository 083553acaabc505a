"""Hypothesis representations: per-label linear scorers and tabular classifiers.

Sign conventions: predictions are sign(score) with sign(0) = +1.  Many
libraries use sign(0) = 0; everything here relies on the two-valued
definition, so the tie case is pinned explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import EnumerationScaleError, FormatError, ShapeError

#: enumerate_tabular refuses more than 2**20 classifiers
_ENUM_GUARD_BITS = 20

MODEL_HEADER_PREFIX = "mmo-model v1"


def sign0(t):
    """Two-valued sign with sign(0) = +1, elementwise."""
    return np.where(np.asarray(t) >= 0, 1, -1).astype(np.int8)


def validate_labels(v, l=None) -> np.ndarray:
    """Check a length-l vector of +1/-1 entries and return it as int8."""
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise ShapeError(f"expected a 1-d label vector, got shape {arr.shape}")
    if l is not None and arr.shape[0] != l:
        raise ShapeError(f"label vector length {arr.shape[0]} != expected {l}")
    if not np.isin(arr, (-1, 1)).all():
        raise ValueError("label entries must all be +1 or -1")
    return arr.astype(np.int8)


def sign_configs(l: int) -> np.ndarray:
    """All 2^l sign vectors, ordered lexicographically with +1 before -1.

    Row 0 is all +1, the last row all -1.  This ordering is the tie-break
    and file-format order used throughout the package.
    """
    idx = np.arange(1 << l)
    bits = (idx[:, None] >> np.arange(l - 1, -1, -1)) & 1
    return (1 - 2 * bits).astype(np.int8)


def config_index(labels) -> int:
    """Position of a sign vector in the sign_configs ordering."""
    arr = validate_labels(labels)
    bits = (arr == -1).astype(np.int64)
    return int(bits @ (1 << np.arange(len(arr) - 1, -1, -1)))


@dataclass
class LinearModel:
    """Per-label linear scorer h(x, k) = w_k . x + b_k."""

    weights: np.ndarray  # (l, d)
    bias: np.ndarray  # (l,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weights must be (l, d) and bias (l,)")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ShapeError("weights and bias disagree on label count")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ValueError("model parameters must be finite")

    @property
    def l(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, l: int, d: int) -> "LinearModel":
        return cls(weights=np.zeros((l, d)), bias=np.zeros(l))

    def scores(self, x) -> np.ndarray:
        """Score vector for one instance (dense array or index->value mapping)."""
        if isinstance(x, Mapping):
            out = self.bias.copy()
            for idx, val in x.items():
                if not 0 <= idx < self.d:
                    raise ShapeError(f"feature index {idx} out of range [0, {self.d})")
                out += self.weights[:, idx] * val
            return out
        xv = np.asarray(x, dtype=np.float64)
        if xv.shape != (self.d,):
            raise ShapeError(f"feature vector shape {xv.shape} != ({self.d},)")
        return self.weights @ xv + self.bias

    def predict(self, x) -> np.ndarray:
        return sign0(self.scores(x))

    def scores_matrix(self, X) -> np.ndarray:
        """Scores for a whole (m, d) feature matrix (dense or scipy sparse)."""
        return np.asarray(X @ self.weights.T) + self.bias

    def predict_matrix(self, X) -> np.ndarray:
        return sign0(self.scores_matrix(X))


@dataclass(frozen=True)
class TabularClassifier:
    """Explicit prediction table over a finite support."""

    assignment: dict

    def predict(self, x_id) -> np.ndarray:
        return self.assignment[x_id]


def enumerate_tabular(support_size: int, l: int, x_ids: Sequence | None = None) -> Iterator[TabularClassifier]:
    """Yield every assignment of a sign vector to each support point.

    There are 2^(support_size * l) classifiers; enumeration refuses above
    2^20.  Point ids default to 0..support_size-1.
    """
    bits_total = support_size * l
    if bits_total > _ENUM_GUARD_BITS:
        raise EnumerationScaleError(
            f"2^{bits_total} classifiers exceed the enumeration guard (2^{_ENUM_GUARD_BITS})"
        )
    ids = list(range(support_size)) if x_ids is None else list(x_ids)
    if len(ids) != support_size:
        raise ShapeError("x_ids length must equal support_size")
    for code in range(1 << bits_total):
        assignment = {}
        for p, x_id in enumerate(ids):
            labels = np.empty(l, dtype=np.int8)
            for k in range(l):
                bit = (code >> (p * l + k)) & 1
                labels[k] = -1 if bit else 1
            assignment[x_id] = labels
        yield TabularClassifier(assignment=assignment)


def save_model(model: LinearModel, path) -> None:
    """Write a model in the versioned sparse text format.

    Header ``mmo-model v1 l=<l> d=<d>``, then one line per label holding the
    bias and the nonzero weights as ``<idx>:<value>``.  Values use shortest
    round-trip decimal rendering, so load(save(m)) is bit-exact.
    """
    lines = [f"{MODEL_HEADER_PREFIX} l={model.l} d={model.d}"]
    for k in range(model.l):
        parts = [f"b={float(model.bias[k])!r}"]
        row = model.weights[k]
        for idx in np.nonzero(row)[0]:
            parts.append(f"{idx}:{float(row[idx])!r}")
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> LinearModel:
    """Read a model written by save_model."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if not raw or not raw[0].startswith(MODEL_HEADER_PREFIX):
        raise FormatError(f"missing {MODEL_HEADER_PREFIX!r} header", line=1)
    fields = dict(
        tok.split("=", 1) for tok in raw[0][len(MODEL_HEADER_PREFIX):].split() if "=" in tok
    )
    try:
        l, d = int(fields["l"]), int(fields["d"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad model header: {exc}", line=1) from exc
    if len(raw) < 1 + l:
        raise FormatError(f"expected {l} label lines, found {len(raw) - 1}", line=len(raw))
    weights = np.zeros((l, d))
    bias = np.zeros(l)
    for k in range(l):
        lineno = k + 2
        toks = raw[k + 1].split()
        if not toks or not toks[0].startswith("b="):
            raise FormatError("label line must start with b=<bias>", line=lineno)
        try:
            bias[k] = float(toks[0][2:])
            for tok in toks[1:]:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                if not 0 <= idx < d:
                    raise ValueError(f"weight index {idx} out of range")
                weights[k, idx] = float(val_s)
        except ValueError as exc:
            raise FormatError(str(exc), line=lineno) from exc
    return LinearModel(weights=weights, bias=bias)
