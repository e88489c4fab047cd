"""Detection of treatment interference under K-nearest-neighbor interference.

Build an interaction graph from pairwise measures, select focal units,
run conditional randomization tests with five statistics, run the
two-stage experimental-design test, and reproduce the benchmark power
study on synthetic data.
"""

from .errors import InputError, KnnimError, PreconditionError
from .focal import (
    RANDOM_HALF,
    TWO_NET,
    FocalPartition,
    select_focals_random_half,
    select_focals_two_net,
)
from .graph import InteractionGraph, build_knn_graph, knn_rank, neighbors_within
from .randtest import (
    RandTestConfig,
    TestReport,
    enumerate_exact_p,
    run_randomization_test,
    run_randomization_tests,
)
from .sim import (
    MODEL_CATALOG,
    EffectSummary,
    PowerStudy,
    Realization,
    SimulationModel,
    generate_realization,
    realized_effects,
    run_power_study,
    true_effects,
)
from .stats import (
    STATISTIC_NAMES,
    StatisticInput,
    StatisticValue,
    TreatmentVector,
    compute_statistic,
    stat_elc,
    stat_htn,
    stat_knn,
    stat_pearson,
    stat_score,
    with_partition,
)
from .twostage import (
    Clustering,
    RejectionRates,
    TwoStageResult,
    asymptotic_threshold,
    cluster_units,
    conservative_threshold,
    observed_two_stage,
    rejection_rates,
    run_two_stage,
)
from .data import (
    ExposureTable,
    KRecommendation,
    ingest,
    recommend_k,
    tabulate_exposures,
)

__version__ = "0.1.0"

__all__ = [
    "KnnimError",
    "InputError",
    "PreconditionError",
    "InteractionGraph",
    "build_knn_graph",
    "neighbors_within",
    "knn_rank",
    "FocalPartition",
    "TWO_NET",
    "RANDOM_HALF",
    "select_focals_two_net",
    "select_focals_random_half",
    "STATISTIC_NAMES",
    "TreatmentVector",
    "StatisticInput",
    "StatisticValue",
    "with_partition",
    "compute_statistic",
    "stat_pearson",
    "stat_elc",
    "stat_score",
    "stat_htn",
    "stat_knn",
    "RandTestConfig",
    "TestReport",
    "run_randomization_test",
    "run_randomization_tests",
    "enumerate_exact_p",
    "Clustering",
    "TwoStageResult",
    "RejectionRates",
    "cluster_units",
    "run_two_stage",
    "observed_two_stage",
    "rejection_rates",
    "conservative_threshold",
    "asymptotic_threshold",
    "MODEL_CATALOG",
    "SimulationModel",
    "Realization",
    "EffectSummary",
    "PowerStudy",
    "generate_realization",
    "true_effects",
    "realized_effects",
    "run_power_study",
    "ExposureTable",
    "KRecommendation",
    "ingest",
    "tabulate_exposures",
    "recommend_k",
    "__version__",
]
