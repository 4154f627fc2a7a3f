"""Cost models, simulation, fitting and selection of broadcast and gather algorithms."""

from .estimation import (
    ExperimentRecord,
    FitResult,
    GammaRecord,
    HockneyRegressor,
    ProfileEstimator,
    design_experiments,
    estimate_gamma,
    fit_alpha_beta,
    fit_profile,
    reduce_to_equation,
)
from .io import grisou_profile, load_profile, save_profile
from .model import predict, predict_with
from .selector import (
    AlgorithmSelector,
    SelectionQuery,
    build_decision_table,
    compare_baseline,
    evaluate_accuracy,
    select,
)
from .simulator import NoiseModel, SimulatedOracle, simulate
from .topology import TreeKind, build_tree, validate_tree
from .types import (
    AlgorithmId,
    CollectiveOp,
    Extrapolation,
    GammaTable,
    HockneyParams,
    InvalidArgument,
    MissingParameters,
    ModelConfig,
    PlatformProfile,
    UnsupportedShape,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
