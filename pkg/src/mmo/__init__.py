"""Multi-label metric optimization via cost-sensitive comp-sum surrogates.

Train per-label linear classifiers that directly optimize generalized
linear-fractional metrics (micro/macro/instance F1, Jaccard, precision,
accuracy) by linearizing the metric ratio with a multiplier lambda and
minimizing an exactly factorized O(l) surrogate loss, plus a verification
suite of brute-force numerical oracles.
"""

__version__ = "0.1.0"

from .data import Dataset, DiscreteDistribution, load_mlsvm, save_mlsvm, synth_linear  # noqa: F401
from .losses import (  # noqa: F401
    CostCoefficients,
    SurrogateParams,
    gamma_from,
    phi_tau,
    surrogate_factorized,
    surrogate_gradient,
    surrogate_naive,
    target_loss,
)
from .metrics import (  # noqa: F401
    ConfusionCounts,
    FourTuple,
    MetricCoefficients,
    MetricSpec,
    confusion_counts,
    empirical_metric,
    population_metric,
    preset,
)
from .models import LinearModel, TabularClassifier, load_model, save_model  # noqa: F401
from .solver import SearchConfig, TrainConfig  # noqa: F401
