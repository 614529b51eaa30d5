"""Multi-objective architecture search with inverse-surrogate recommendation.

The toolkit searches a cell-stacking architecture space for codes that trade
off accuracy against parameter count: an archive tracks every evaluation and
its Pareto boundary, a forward surrogate learns code-to-performance, a
reverse surrogate is trained through the frozen forward model to map desired
performance back to codes, and a small regressor predicts final accuracy from
cheap attributes.  Synthetic oracles stand in for real network training.
"""

from .baselines import EvoConfig, evolve, random_search
from .mlp import MlpModel, TrainConfig
from .oracle import (
    CostModel,
    EvalResult,
    Evaluator,
    QuickMetrics,
    SyntheticEvaluator,
    SyntheticLandscape,
    flops_estimate,
    param_count,
    synthetic_evaluate,
)
from .pareto import (
    Archive,
    EvaluatedRecord,
    PerformancePair,
    dominates,
    hypervolume,
    in_ideal_region,
    pareto_boundary,
    sample_ideal_region,
)
from .predictor import (
    ATTRIBUTE_NAMES,
    AccuracyPredictor,
    AttributeVector,
    extract_attributes,
    predict_accuracy,
    train_predictor,
)
from .recommender import (
    PerfNormalizer,
    build_target_batch,
    composed_loss,
    recommend,
    train_forward_model,
    train_reverse_model,
)
from .search import OptimizerConfig, RunReport, RunState, bootstrap, iterate, run
from .space import (
    ArchitectureCode,
    CellCatalog,
    CellEntry,
    code_from_string,
    code_to_string,
    code_to_vector,
    default_catalog,
    load_catalog,
    random_code,
    space_cardinality,
    stage_widths,
    structural_attributes,
    validate_code,
    vector_to_code,
)

__version__ = "0.1.0"
