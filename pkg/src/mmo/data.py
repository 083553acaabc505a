"""Dataset ingestion, synthetic generators, and finite verification
distributions.

Two text formats are defined here and consumed by the CLI:

* ``.mlsvm`` samples: UTF-8, LF line endings.  The first non-comment line is
  the header ``#ml l=<int> d=<int>``.  Each instance line is
  ``<labels> <idx>:<val> ...`` where ``<labels>`` is a comma-separated list
  of 0-based positive-label indices, or ``-`` for none; feature indices are
  0-based and strictly increasing within a line.

* ``.dist`` finite distributions: a sequence of ``point <id> w=<weight>``
  lines, each followed by either ``marginals p1 ... pl`` (independent
  per-label positive probabilities) or ``table p1 ... p_{2^l}`` (a full joint
  over sign configurations in lexicographic order, +1 before -1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import DataError, FormatError, ShapeError
from .models import LinearModel, sign0, sign_configs

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class Dataset:
    """A sample of m instances: sparse features plus sign-valued labels."""

    l: int
    d: int
    X: sparse.csr_matrix  # (m, d)
    Y: np.ndarray  # (m, l) with entries in {+1,-1}

    def __post_init__(self):
        if self.X.shape[0] != self.Y.shape[0]:
            raise ShapeError("feature matrix and labels disagree on instance count")
        if self.X.shape[1] != self.d or self.Y.shape[1] != self.l:
            raise ShapeError("feature/label dimensions disagree with header")

    @property
    def m(self) -> int:
        return self.X.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(l=self.l, d=self.d, X=self.X[idx], Y=self.Y[idx])


def load_mlsvm(path) -> Dataset:
    """Parse an .mlsvm file (format at module top)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    header = None
    rows, cols, vals = [], [], []
    label_rows = []
    n_inst = 0
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if header is None:
            if stripped.startswith("#ml"):
                header = _parse_header(stripped, lineno)
                continue
            if stripped.startswith("#"):
                continue
            raise FormatError("missing '#ml l=<int> d=<int>' header", line=lineno)
        if stripped.startswith("#"):
            continue
        l, d = header
        toks = stripped.split()
        labels = _parse_labels(toks[0], l, lineno)
        last_idx = -1
        for tok in toks[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                val = float(val_s)
            except ValueError as exc:
                raise FormatError(f"bad feature token {tok!r}", line=lineno) from exc
            if idx == last_idx:
                raise FormatError(f"duplicate feature index {idx}", line=lineno)
            if idx < last_idx:
                raise FormatError(
                    f"feature indices must be strictly increasing (saw {idx} after {last_idx})",
                    line=lineno,
                )
            if not 0 <= idx < d:
                raise FormatError(f"feature index {idx} out of range [0, {d})", line=lineno)
            rows.append(n_inst)
            cols.append(idx)
            vals.append(val)
            last_idx = idx
        label_rows.append(labels)
        n_inst += 1

    if header is None:
        raise FormatError("missing '#ml l=<int> d=<int>' header", line=max(1, len(lines)))
    l, d = header
    X = sparse.csr_matrix(
        (np.array(vals, dtype=np.float64), (rows, cols)), shape=(n_inst, d)
    )
    Y = (
        np.array(label_rows, dtype=np.int8)
        if label_rows
        else np.empty((0, l), dtype=np.int8)
    )
    return Dataset(l=l, d=d, X=X, Y=Y)


def _parse_header(line, lineno):
    fields = dict(tok.split("=", 1) for tok in line[3:].split() if "=" in tok)
    try:
        l = int(fields["l"])
        d = int(fields["d"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad header {line!r}: {exc}", line=lineno) from exc
    if l < 1 or d < 1:
        raise FormatError("header requires l >= 1 and d >= 1", line=lineno)
    return l, d


def _parse_labels(tok, l, lineno):
    labels = np.full(l, -1, dtype=np.int8)
    if tok == "-":
        return labels
    for part in tok.split(","):
        try:
            k = int(part)
        except ValueError as exc:
            raise FormatError(f"bad label field {tok!r}", line=lineno) from exc
        if not 0 <= k < l:
            raise FormatError(f"label index {k} out of range [0, {l})", line=lineno)
        labels[k] = 1
    return labels


def save_mlsvm(ds: Dataset, path) -> None:
    """Write an .mlsvm file; floats use shortest round-trip rendering."""
    lines = [f"#ml l={ds.l} d={ds.d}"]
    X = ds.X.tocsr()
    for i in range(ds.m):
        pos = np.nonzero(ds.Y[i] == 1)[0]
        label_tok = ",".join(str(k) for k in pos) if len(pos) else "-"
        start, end = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(
            f"{X.indices[j]}:{float(X.data[j])!r}" for j in range(start, end)
        )
        lines.append(f"{label_tok} {feats}".rstrip())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class DistPoint:
    """One support point: weight plus a conditional label distribution."""

    x_id: str
    weight: float
    marginals: np.ndarray | None = None  # (l,) P(y_k = +1)
    table: np.ndarray | None = None  # (2^l,) joint over sign configs

    def __post_init__(self):
        if (self.marginals is None) == (self.table is None):
            raise DataError("point needs exactly one of marginals or table")
        if self.weight <= 0:
            raise DataError(f"point {self.x_id!r}: weight must be > 0")
        if self.marginals is not None:
            m = np.asarray(self.marginals, dtype=np.float64)
            if np.any(m < 0) or np.any(m > 1):
                raise DataError(f"point {self.x_id!r}: marginals must lie in [0, 1]")
            object.__setattr__(self, "marginals", m)
        else:
            t = np.asarray(self.table, dtype=np.float64)
            n = t.shape[0]
            if n < 2 or n & (n - 1):
                raise DataError(f"point {self.x_id!r}: table length must be a power of two")
            if np.any(t < 0) or abs(t.sum() - 1.0) > _NORM_TOL:
                raise DataError(f"point {self.x_id!r}: table must be nonnegative and sum to 1")
            object.__setattr__(self, "table", t)

    @property
    def l(self) -> int:
        if self.marginals is not None:
            return self.marginals.shape[0]
        return int(self.table.shape[0]).bit_length() - 1

    def marginal_pos(self) -> np.ndarray:
        """P(y_k = +1) per label."""
        if self.marginals is not None:
            return self.marginals
        cfg = sign_configs(self.l)
        return self.table @ (cfg == 1)

    def config_probs(self) -> np.ndarray:
        """Joint probability of each sign configuration (product form for
        marginal-specified points)."""
        if self.table is not None:
            return self.table
        cfg = sign_configs(self.l)
        p = self.marginals
        return np.where(cfg == 1, p, 1.0 - p).prod(axis=1)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support distribution used for exhaustive verification."""

    points: tuple[DistPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise DataError("distribution needs at least one point")
        l = self.points[0].l
        if any(p.l != l for p in self.points):
            raise DataError("all points must share the same label count")
        total = sum(p.weight for p in self.points)
        if abs(total - 1.0) > _NORM_TOL:
            raise DataError(f"point weights sum to {total!r}, expected 1")
        ids = [p.x_id for p in self.points]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate point ids")

    @property
    def l(self) -> int:
        return self.points[0].l

    @property
    def support_size(self) -> int:
        return len(self.points)


def synth_discrete(text: str) -> DiscreteDistribution:
    """Parse the .dist grammar (see module docstring)."""
    points = []
    pending = None  # (id, weight, lineno)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if toks[0] == "point":
            if pending is not None:
                raise FormatError(
                    f"point {pending[0]!r} has no marginals/table line", line=lineno
                )
            if len(toks) != 3 or not toks[2].startswith("w="):
                raise FormatError("expected 'point <id> w=<weight>'", line=lineno)
            try:
                weight = float(toks[2][2:])
            except ValueError as exc:
                raise FormatError(f"bad weight {toks[2]!r}", line=lineno) from exc
            pending = (toks[1], weight, lineno)
        elif toks[0] in ("marginals", "table"):
            if pending is None:
                raise FormatError(f"{toks[0]} line without a preceding point", line=lineno)
            try:
                values = np.array([float(t) for t in toks[1:]], dtype=np.float64)
            except ValueError as exc:
                raise FormatError(f"bad probability value: {exc}", line=lineno) from exc
            if values.size == 0:
                raise FormatError(f"{toks[0]} line needs at least one value", line=lineno)
            x_id, weight, _ = pending
            try:
                if toks[0] == "marginals":
                    points.append(DistPoint(x_id=x_id, weight=weight, marginals=values))
                else:
                    points.append(DistPoint(x_id=x_id, weight=weight, table=values))
            except DataError as exc:
                raise FormatError(str(exc), line=lineno) from exc
            pending = None
        else:
            raise FormatError(f"unrecognized directive {toks[0]!r}", line=lineno)
    if pending is not None:
        raise FormatError(f"point {pending[0]!r} has no marginals/table line", line=pending[2])
    try:
        return DiscreteDistribution(points=tuple(points))
    except DataError as exc:
        raise FormatError(str(exc)) from exc


def load_dist(path) -> DiscreteDistribution:
    with open(path, "r", encoding="utf-8") as fh:
        return synth_discrete(fh.read())


def single_point_dist(marginals) -> DiscreteDistribution:
    """Convenience: one support point with the given positive marginals."""
    return DiscreteDistribution(
        points=(DistPoint(x_id="x0", weight=1.0, marginals=np.asarray(marginals, dtype=np.float64)),)
    )


def random_discrete(support: int, l: int, seed, *, table_prob: float = 0.3) -> DiscreteDistribution:
    """Random small distribution for verification sweeps.

    Marginals are kept away from {0, 1} so every enumerable classifier has a
    positive metric denominator for the f1/jaccard presets.
    """
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.2, 1.0, size=support)
    weights /= weights.sum()
    # exact renormalization so the validation tolerance is met bit-wise
    weights[-1] = 1.0 - weights[:-1].sum()
    points = []
    for i in range(support):
        if rng.uniform() < table_prob:
            t = rng.uniform(0.05, 1.0, size=1 << l)
            t /= t.sum()
            t[-1] = 1.0 - t[:-1].sum()
            points.append(DistPoint(x_id=f"x{i}", weight=float(weights[i]), table=t))
        else:
            m = rng.uniform(0.05, 0.95, size=l)
            points.append(DistPoint(x_id=f"x{i}", weight=float(weights[i]), marginals=m))
    return DiscreteDistribution(points=tuple(points))


def synth_linear(
    l: int,
    d: int,
    m: int,
    positive_rate: float,
    noise: float,
    seed,
) -> tuple[Dataset, LinearModel]:
    """Synthetic linearly-scored data with a planted model.

    Features are standard Gaussian.  Per-label biases are calibrated so the
    marginal positive rate is approximately ``positive_rate`` under the label
    mechanism: deterministic sign labels when ``noise`` is 0, otherwise
    Bernoulli with P(y=+1) = sigmoid(score / noise).
    """
    if not 0 < positive_rate < 1:
        raise ValueError("positive_rate must lie in (0, 1)")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, d))
    W = rng.standard_normal((l, d)) / np.sqrt(d)
    raw = X @ W.T  # (m, l)
    bias = np.empty(l)
    for k in range(l):
        bias[k] = _calibrate_bias(raw[:, k], positive_rate, noise)
    scores = raw + bias
    if noise == 0:
        Y = sign0(scores)
    else:
        p = expit(scores / noise)
        Y = np.where(rng.uniform(size=scores.shape) < p, 1, -1).astype(np.int8)
    ds = Dataset(l=l, d=d, X=sparse.csr_matrix(X), Y=Y)
    return ds, LinearModel(weights=W, bias=bias)


def _calibrate_bias(col, rate, noise):
    if noise == 0:
        return -float(np.quantile(col, 1.0 - rate))
    # expected positive fraction is monotone in the bias; bisect it
    lo = -float(col.max()) - 60.0 * noise
    hi = -float(col.min()) + 60.0 * noise
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if expit((col + mid) / noise).mean() < rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
