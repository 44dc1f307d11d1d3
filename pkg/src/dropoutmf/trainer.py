"""Stochastic dropout training of ``X ~ U V^T`` and its deterministic twin.

At every iteration of :func:`train_dropout` a Bernoulli column mask ``r`` is
drawn, the gradient of ``||X - (1/theta) U diag(r) V^T||_F^2`` is formed, and
only the retained columns move::

    [U; V] <- [U; V] + (2 eps / theta) [dU; dV] diag(r)

:func:`train_deterministic` runs plain gradient descent on the expected loss,
so the expected dropout step equals the deterministic step for the same
``eps``.
"""

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_mask, check_matrix, check_nonnegative, check_open_unit, check_positive_int
from .exceptions import DivergenceError, ParameterError, ShapeError
from .matrix_core import make_rng, sample_bernoulli_vector, svd
from .objective import DropoutConfig, FactorPair

DIVERGENCE_THRESHOLD = 1e12


@dataclass(frozen=True)
class Constant:
    """Fixed step size."""

    eps: float

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ParameterError(f"step size must be finite and non-negative, got {self.eps}")

    def resolve(self, X, theta):
        return self

    def __call__(self, t):
        return self.eps

    def to_dict(self):
        return {"kind": "constant", "eps": self.eps}


@dataclass(frozen=True)
class Diminishing:
    """Step ``eps0 / (1 + (t - 1) / tau)``; with the default ``tau = 1`` this is ``eps0 / t``.

    ``eps0=None`` is resolved per problem to ``theta**2 / (2 sigma_1(X))``.
    """

    eps0: float = None
    tau: float = 1.0

    def __post_init__(self):
        if self.eps0 is not None and not (self.eps0 > 0 and math.isfinite(self.eps0)):
            raise ParameterError(f"eps0 must be positive, got {self.eps0}")
        if not self.tau > 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")

    def resolve(self, X, theta):
        if self.eps0 is not None:
            return self
        return Diminishing(eps0=default_eps0(X, theta), tau=self.tau)

    def __call__(self, t):
        return self.eps0 / (1.0 + (t - 1) / self.tau)

    def to_dict(self):
        return {"kind": "diminishing", "eps0": self.eps0, "tau": self.tau}


def default_eps0(X, theta):
    """Initial step scaled to the curvature of the dropout loss.

    The Hessian of the masked loss in ``U`` is ``(2 / theta**2) V_r^T V_r``
    and ``||V||^2`` is of order ``sigma_1(X)`` for a balanced fit.
    """
    s1 = svd(X).sigma[0]
    if s1 == 0:
        return theta**2 / 2.0
    return theta**2 / (2.0 * s1)


@dataclass(frozen=True)
class TrainConfig:
    """Settings shared by :func:`train_dropout` and :func:`train_deterministic`.

    ``alternating_block = b > 0`` performs ``b`` U-only updates followed by
    ``b`` V-only updates, repeating; 0 updates both factors jointly.
    """

    n_components: int
    dropout: DropoutConfig
    iterations: int = 10000
    schedule: object = field(default_factory=Diminishing)
    init_std: float = 0.1
    ema_decay: float = 0.99
    alternating_block: int = 0
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self):
        check_positive_int(self.n_components, "n_components")
        check_positive_int(self.iterations, "iterations")
        if not isinstance(self.dropout, DropoutConfig):
            raise ParameterError("dropout must be a DropoutConfig")
        if not isinstance(self.schedule, (Constant, Diminishing)):
            raise ParameterError("schedule must be Constant or Diminishing")
        if not self.init_std > 0:
            raise ParameterError("init_std must be positive")
        check_open_unit(self.ema_decay, "ema_decay")
        if isinstance(self.alternating_block, bool) or int(self.alternating_block) != self.alternating_block or self.alternating_block < 0:
            raise ParameterError("alternating_block must be a non-negative integer")

    @property
    def theta(self):
        return self.dropout.retain_probability(self.n_components)

    def to_dict(self):
        return {
            "n_components": self.n_components,
            "dropout": self.dropout.to_dict(),
            "theta": self.theta,
            "iterations": self.iterations,
            "schedule": self.schedule.to_dict(),
            "init_std": self.init_std,
            "ema_decay": self.ema_decay,
            "alternating_block": self.alternating_block,
        }


@dataclass
class TrainReport:
    stochastic_trace: np.ndarray
    ema_trace: np.ndarray
    deterministic_trace: np.ndarray
    final_factors: FactorPair
    wall_time: float
    theta: float
    schedule: dict = None

    @property
    def iterations(self):
        return len(self.stochastic_trace)

    def to_dict(self, include_factors=False):
        out = {
            "iterations": self.iterations,
            "theta": self.theta,
            "schedule": self.schedule,
            "wall_time": self.wall_time,
            "stochastic_trace": self.stochastic_trace.tolist(),
            "ema_trace": self.ema_trace.tolist(),
            "deterministic_trace": self.deterministic_trace.tolist(),
        }
        if include_factors:
            out["U"] = self.final_factors.U.tolist()
            out["V"] = self.final_factors.V.tolist()
        return out

    def to_json(self, path, include_factors=False):
        with open(path, "w") as fh:
            json.dump(self.to_dict(include_factors), fh)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "stochastic", "ema", "deterministic"])
            for t, row in enumerate(
                zip(self.stochastic_trace, self.ema_trace, self.deterministic_trace), start=1
            ):
                w.writerow([t, *(repr(float(v)) for v in row)])


def dropout_gradients(X, F, r, scale=1.0):
    """Residual-times-factor blocks for one mask.

    Returns ``dU = E V`` and ``dV = E^T U`` with
    ``E = X - scale * U diag(r) V^T``. With ``scale=1`` these are the
    literal blocks of the update rule; the trainer passes ``scale=1/theta``
    so that the step follows the negative gradient of the masked loss.
    """
    X = check_matrix(X)
    F.check_target(X)
    r = check_mask(r, F.d)
    E = X - scale * ((F.U * r) @ F.V.T)
    return E @ F.V, E.T @ F.U


def sgd_step(F, dU, dV, r, epsilon, theta, update="both"):
    """Move retained columns by ``(2 epsilon / theta) * gradient block``.

    Columns with ``r_k == 0`` are copied through unchanged. `update` selects
    ``"both"``, ``"U"`` or ``"V"`` for alternating schedules.
    """
    theta = check_open_unit(theta, "theta")
    epsilon = check_nonnegative(epsilon, "epsilon")
    r = check_mask(r, F.d)
    if np.shape(dU) != F.U.shape or np.shape(dV) != F.V.shape:
        raise ShapeError("gradient blocks must match the factor shapes")
    keep = r.astype(bool)
    coef = 2.0 * epsilon / theta
    U = F.U.copy()
    V = F.V.copy()
    if update in ("both", "U"):
        U[:, keep] += coef * dU[:, keep]
    if update in ("both", "V"):
        V[:, keep] += coef * dV[:, keep]
    return FactorPair(U, V)


def deterministic_gradients(X, F, theta=None, penalty=None):
    """Gradient of ``||X - U V^T||^2 + lam * omega_dropout`` w.r.t. ``U`` and ``V``.

    ``lam`` is `penalty` when given, otherwise ``(1 - theta)/theta``.
    """
    X = check_matrix(X)
    F.check_target(X)
    lam = _penalty_weight(theta, penalty)
    E = X - F.product()
    nu, nv = F.column_sq_norms()
    gU = -2.0 * E @ F.V + 2.0 * lam * F.U * nv
    gV = -2.0 * E.T @ F.U + 2.0 * lam * F.V * nu
    return gU, gV


def _penalty_weight(theta, penalty):
    if penalty is not None:
        return check_nonnegative(penalty, "penalty")
    theta = check_open_unit(theta, "theta")
    return (1.0 - theta) / theta


def init_factors(shape, d, init_std, rng):
    """Gaussian initialization; ``U`` is drawn before ``V``."""
    m, n = shape
    U = rng.normal(0.0, init_std, size=(m, d))
    V = rng.normal(0.0, init_std, size=(n, d))
    return FactorPair(U, V)


def _phase(t, block):
    if block == 0:
        return "both"
    return "U" if ((t - 1) // block) % 2 == 0 else "V"


def _start(X, config, rng, init):
    X = check_matrix(X)
    if init is None:
        F = init_factors(X.shape, config.n_components, config.init_std, rng)
    else:
        F = init if isinstance(init, FactorPair) else FactorPair(*init)
        if F.d != config.n_components:
            raise ShapeError(f"init has {F.d} columns, config expects {config.n_components}")
        F.check_target(X)
    return X, F


def _guard(t, value, threshold, label):
    if not math.isfinite(value) or value > threshold:
        raise DivergenceError(f"{label} objective diverged at iteration {t}: {value}", iteration=t, value=value)


def train_dropout(X, config, rng=None, init=None):
    """Dropout SGD on the factors.

    Records, before each update, the masked loss for the mask used in that
    step, its exponential moving average and the deterministic objective at
    the current factors.

    Parameters
    ----------
    X : array-like of shape (m, n)
    config : TrainConfig
    rng : Generator or int, optional
        Drives the initialization (first) and then the masks.
    init : FactorPair, optional
        Starting factors; skips the random initialization.

    Raises
    ------
    DivergenceError
        If a trace value is non-finite or exceeds ``config.divergence_threshold``.
    """
    rng = make_rng(rng)
    X, F = _start(X, config, rng, init)
    d = config.n_components
    theta = config.theta
    lam = (1.0 - theta) / theta
    schedule = config.schedule.resolve(X, theta)
    T = config.iterations
    stoch = np.empty(T)
    ema = np.empty(T)
    det = np.empty(T)
    beta = config.ema_decay
    U, V = F.U.copy(), F.V.copy()
    t0 = time.perf_counter()
    for t in range(1, T + 1):
        r = sample_bernoulli_vector(d, theta, rng)
        keep = r.astype(bool)
        Ur = U * r
        E_full = X - U @ V.T
        nu = np.einsum("ij,ij->j", U, U)
        nv = np.einsum("ij,ij->j", V, V)
        det[t - 1] = float(np.vdot(E_full, E_full)) + lam * float(np.dot(nu, nv))
        E = X - (Ur @ V.T) / theta
        stoch[t - 1] = float(np.vdot(E, E))
        ema[t - 1] = stoch[0] if t == 1 else beta * ema[t - 2] + (1.0 - beta) * stoch[t - 1]
        _guard(t, stoch[t - 1], config.divergence_threshold, "stochastic")
        _guard(t, det[t - 1], config.divergence_threshold, "deterministic")

        coef = 2.0 * schedule(t) / theta
        phase = _phase(t, config.alternating_block)
        if phase in ("both", "U"):
            dU = E @ V[:, keep]
        if phase in ("both", "V"):
            dV = E.T @ U[:, keep]
        if phase in ("both", "U"):
            U[:, keep] += coef * dU
        if phase in ("both", "V"):
            V[:, keep] += coef * dV
    return TrainReport(
        stochastic_trace=stoch,
        ema_trace=ema,
        deterministic_trace=det,
        final_factors=FactorPair(U, V),
        wall_time=time.perf_counter() - t0,
        theta=theta,
        schedule=schedule.to_dict(),
    )


def train_deterministic(X, config, rng=None, init=None, penalty=None):
    """Full gradient descent on the deterministic objective.

    Uses the same initialization stream as :func:`train_dropout` for equal
    seeds. `penalty` overrides the weight ``(1 - theta)/theta``; pass 0 for
    unregularized factorization. The stochastic and EMA traces equal the
    deterministic trace.
    """
    rng = make_rng(rng)
    X, F = _start(X, config, rng, init)
    theta = config.theta
    lam = _penalty_weight(theta, penalty)
    schedule = config.schedule.resolve(X, theta)
    T = config.iterations
    det = np.empty(T)
    U, V = F.U.copy(), F.V.copy()
    t0 = time.perf_counter()
    for t in range(1, T + 1):
        E = X - U @ V.T
        nu = np.einsum("ij,ij->j", U, U)
        nv = np.einsum("ij,ij->j", V, V)
        det[t - 1] = float(np.vdot(E, E)) + lam * float(np.dot(nu, nv))
        _guard(t, det[t - 1], config.divergence_threshold, "deterministic")
        eps = schedule(t)
        phase = _phase(t, config.alternating_block)
        gU = -2.0 * E @ V + 2.0 * lam * U * nv if phase in ("both", "U") else None
        gV = -2.0 * E.T @ U + 2.0 * lam * V * nu if phase in ("both", "V") else None
        if gU is not None:
            U -= eps * gU
        if gV is not None:
            V -= eps * gV
    return TrainReport(
        stochastic_trace=det.copy(),
        ema_trace=det.copy(),
        deterministic_trace=det,
        final_factors=FactorPair(U, V),
        wall_time=time.perf_counter() - t0,
        theta=theta,
        schedule=schedule.to_dict(),
    )
