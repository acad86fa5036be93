"""Margin-regularized nearest-neighbor classification in metric spaces."""

__version__ = "0.1.0"

from .ann_index import NnAnswer, NnIndex
from .bayes_sim import (
    RiskReport,
    SyntheticDistribution,
    bayes_risk,
    check_distribution,
    make_distribution,
    nn_risk_trials,
)
from .bounds import (
    BoundParams,
    BoundValue,
    chaining_alpha_star,
    delta_combined,
    delta_fat,
    delta_rad,
    dimred_bound,
    entropy_bound,
    rademacher_bound,
    sweep_grid,
)
from .classifier import (
    LipschitzClassifier,
    Margin,
    ScoreTable,
    label_sign,
    margin,
    truncate,
)
from .errors import (
    CoverSizeLimitError,
    DegenerateDiameterError,
    DegenerateTrainingError,
    EmptyIndexError,
    IngestError,
    InputError,
    MetricMarginError,
    PayloadMismatchError,
    SchemaVersionError,
    TruncationRangeError,
    UnknownLabelError,
)
from .metric_core import (
    DoublingEstimate,
    MetricOracle,
    Sample,
    covering_bound,
    distance,
    estimate_ddim,
    ingest,
    levenshtein,
    normalize_sample,
    pairwise_distances,
    user_ddim,
)
from .srm import (
    CandidateTable,
    ConflictGraph,
    CoverResult,
    SrmResult,
    build_conflict_graph,
    candidate_lipschitz_values,
    exact_cover,
    greedy_cover,
    srm_train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
