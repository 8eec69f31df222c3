"""Fenchel-Young losses generated by generalized entropies.

Entropies (Shannon, Tsallis, norm, squared norm, Renyi), their regularized
prediction maps, the losses and their separation margins, plus linear-model
training, multi-label data loading and solver benchmarks.
"""

from .entropies import (
    Domain,
    EntropySpec,
    Family,
    entropy_gradient,
    entropy_value,
    norm,
    renyi,
    shannon,
    squared_norm,
    tsallis,
)
from .errors import (
    BoundaryGradientUndefined,
    DomainViolation,
    EmptyAfterFiltering,
    FYError,
    IndexOutOfDeclaredRange,
    InvalidParameter,
    MarginViolated,
    NoConvergence,
    NonFiniteObjective,
    NotSeparable,
    OneHotRequired,
    OutOfRange,
    ParseError,
    SolverMismatch,
)
from .losses import (
    LossEvaluation,
    bregman_bound_check,
    bregman_divergence,
    conjugate_value,
    loss_gradient,
    loss_rows,
    loss_value,
    temperature_scaled_loss,
)
from .margin import MarginReport, margin_brute_force, margin_closed_form, margin_empirical
from .prediction import (
    PredictionResult,
    predict,
    predict_rows,
    softmax,
    solve_projected_gradient,
    solve_root_separable,
    sparsemax_exact,
)
from .specs import (
    FyLossSpec,
    HingeLinear,
    Method,
    NegEntropy,
    SolverPolicy,
    SquaredL2,
    Zero,
    hinge_loss,
    logistic_loss,
    one_vs_all_logistic_loss,
    perceptron_loss,
    sparsemax_loss,
    squared_loss,
    tsallis_loss,
)

__version__ = "0.1.0"
