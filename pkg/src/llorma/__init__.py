"""Local low-rank matrix approximation.

Global and kernel-weighted matrix factorization, anchor-based local models
combined by Nadaraya-Watson regression, and a dense nuclear-norm completion
solver for small matrices.
"""
from .data import (
    MOVIELENS_SCALE,
    UNBOUNDED_SCALE,
    ObservedMatrix,
    RatingScale,
    RatingTriple,
    format_ratings,
    parse_ratings,
    project_observed,
    read_ratings,
    split_train_test,
)
from .ensemble import EnsembleModel, Metrics, evaluate, evaluate_global, fit_ensemble, nw_weights, predict
from .estimators import GlobalLRMA, LocalLRMA, SVTCompleter
from .exceptions import (
    ConfigError,
    DataError,
    DivergenceError,
    DuplicateError,
    EmptyInputError,
    EmptyNeighborhoodError,
    InsufficientEntriesError,
    LLORMAError,
    NumericalError,
    ParseError,
    RangeError,
    ShapeError,
    SizeError,
)
from .experiment import ExperimentConfig, SeriesRow, emit_series, read_series, run_experiment, sweep
from .factor import (
    FactorPair,
    TrainConfig,
    objective_and_gradient,
    predict_entry,
    read_factors,
    rmse,
    train_global,
    weighted_loss_and_gradient,
    write_factors,
)
from .kernels import (
    DistanceModel,
    KernelConfig,
    anchor_weight_vectors,
    arccos_distance,
    epanechnikov,
    product_kernel,
    uniform,
)
from .local import (
    Anchor,
    LocalModel,
    sample_anchors,
    train_local,
    train_local_models,
    weighted_objective_and_gradient,
)
from .nuclear import SvtConfig, SvtResult, nuclear_norm, shrink, svt_complete, svt_local

__version__ = "0.1.0"
