"""Adaptive testing with a learned, entropy-regularized question-selection
policy: data handling, a small reverse-mode autodiff tape, response models,
Gumbel-Softmax selection, bilevel training, classical baselines,
accuracy/security metrics, and an experiment harness.
"""

from .baselines import MapConfig, fit_irt, map_estimate_theta, select_active, select_random
from .data import (
    EpisodeState,
    InnerOuterPartition,
    ResponseDataset,
    encode_policy_input,
    generate_synthetic,
    load_csv,
    partition_questions,
    split_students,
    write_csv,
)
from .errors import (
    ArgumentError,
    BilevelCatError,
    DivergenceError,
    DomainError,
    IntegrityError,
    MetricUndefinedError,
    NumericError,
    ParseError,
    StateError,
    ValidationError,
)
from .harness import (
    BaselineMethodParams,
    EvalResult,
    LearnedMethodParams,
    SweepRow,
    SweepSpec,
    evaluate,
    report,
    run_cat_episode,
    sweep,
)
from .metrics import (
    ExposureProfile,
    TradeoffPoint,
    auc,
    expose_chi,
    exposure_from_administrations,
    overlap_mu,
)
from .policy import (
    MaskedCategorical,
    PolicyParams,
    entropy,
    forward_logits,
    gumbel_softmax_sample,
    masked_softmax,
    select_next,
)
from .response import (
    Ability,
    IrtParams,
    NeuralResponseParams,
    bce_loss,
    predict_all,
    predict_prob,
    prox_penalty,
)
from .tape import Tape, Var, grad_check
from .trainer import TrainConfig, TrainState, inner_adapt, inner_adapt_numpy, outer_objective, train

__version__ = "0.1.0"

__all__ = [
    "Ability",
    "ArgumentError",
    "BaselineMethodParams",
    "BilevelCatError",
    "DivergenceError",
    "DomainError",
    "EpisodeState",
    "EvalResult",
    "ExposureProfile",
    "InnerOuterPartition",
    "IntegrityError",
    "IrtParams",
    "LearnedMethodParams",
    "MapConfig",
    "MaskedCategorical",
    "MetricUndefinedError",
    "NeuralResponseParams",
    "NumericError",
    "ParseError",
    "PolicyParams",
    "ResponseDataset",
    "StateError",
    "SweepRow",
    "SweepSpec",
    "Tape",
    "TradeoffPoint",
    "TrainConfig",
    "TrainState",
    "ValidationError",
    "Var",
    "auc",
    "bce_loss",
    "encode_policy_input",
    "entropy",
    "evaluate",
    "expose_chi",
    "exposure_from_administrations",
    "fit_irt",
    "forward_logits",
    "generate_synthetic",
    "grad_check",
    "gumbel_softmax_sample",
    "inner_adapt",
    "inner_adapt_numpy",
    "load_csv",
    "map_estimate_theta",
    "masked_softmax",
    "outer_objective",
    "overlap_mu",
    "partition_questions",
    "predict_all",
    "predict_prob",
    "prox_penalty",
    "report",
    "run_cat_episode",
    "select_active",
    "select_next",
    "select_random",
    "split_students",
    "sweep",
    "train",
    "write_csv",
]
