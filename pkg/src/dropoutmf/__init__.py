"""Dropout regularization for matrix factorization and its squared-nuclear-norm closed form."""

__version__ = "0.1.0"

from .adaptive import (
    adapted_penalty,
    balanced_factorization,
    gamma_of_p,
    lambda_of_theta,
    p_of_theta,
    theta_of_d,
    theta_of_lambda,
)
from .closed_form import (
    ShrinkageSolution,
    compute_d_bar,
    compute_mu,
    convex_objective,
    shrinkage,
    solve_closed_form,
    solve_convex_iterative,
)
from .estimators import DropoutMF, SquaredNuclearShrinkage
from .exceptions import (
    BoundaryError,
    CapacityError,
    ConvergenceError,
    DivergenceError,
    DropoutMFError,
    ParameterError,
    ShapeError,
)
from .matrix_core import (
    SvdResult,
    frobenius_norm_sq,
    make_rng,
    read_matrix_csv,
    sample_bernoulli_vector,
    spawn_rngs,
    svd,
    write_matrix_csv,
)
from .nuclear import nuclear_norm, pathological_double, variational_factorization, variational_value
from .objective import (
    DropoutConfig,
    FactorPair,
    deterministic_objective,
    exact_expected_objective,
    monte_carlo_objective,
    omega_dropout,
    sampled_objective,
)
from .trainer import (
    Constant,
    Diminishing,
    TrainConfig,
    TrainReport,
    deterministic_gradients,
    dropout_gradients,
    sgd_step,
    train_deterministic,
    train_dropout,
)
