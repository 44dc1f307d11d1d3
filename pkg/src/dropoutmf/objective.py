"""Dropout matrix-factorization objectives.

Three views of the same quantity are provided:

* :func:`sampled_objective` -- the loss for one Bernoulli column mask,
* :func:`exact_expected_objective` -- brute-force expectation over all masks,
* :func:`deterministic_objective` -- the closed-form expectation, a squared
  residual plus a weighted product-of-column-norms penalty.

:func:`monte_carlo_objective` estimates the expectation when ``d`` is too
large to enumerate.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_mask, check_matrix, check_open_unit, check_positive_int
from .exceptions import CapacityError, ParameterError, ShapeError
from .matrix_core import sample_bernoulli_matrix

MAX_ENUMERATION_D = 20


@dataclass(frozen=True)
class FactorPair:
    """A factorization ``U @ V.T`` with ``U`` of shape (m, d) and ``V`` of shape (n, d)."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = check_matrix(self.U, "U")
        V = check_matrix(self.V, "V")
        if U.shape[1] != V.shape[1]:
            raise ShapeError(f"U and V must have the same number of columns, got {U.shape} and {V.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def d(self):
        return self.U.shape[1]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def product(self):
        return self.U @ self.V.T

    def column_sq_norms(self):
        """Squared Euclidean norms of the columns of U and of V."""
        return np.einsum("ij,ij->j", self.U, self.U), np.einsum("ij,ij->j", self.V, self.V)

    def check_target(self, X):
        if self.shape != X.shape:
            raise ShapeError(f"factors produce a {self.shape} matrix but X has shape {X.shape}")


@dataclass(frozen=True)
class DropoutConfig:
    """Retain-probability policy.

    ``mode="fixed"`` keeps every column with probability `theta` regardless
    of the factorization size. ``mode="adaptive"`` uses
    ``theta(d) = p / (d - (d - 1) p)``.
    """

    mode: str = "fixed"
    theta: float = None
    p: float = None

    def __post_init__(self):
        if self.mode == "fixed":
            if self.p is not None or self.theta is None:
                raise ParameterError("fixed mode needs theta and no p")
            object.__setattr__(self, "theta", check_open_unit(self.theta, "theta"))
        elif self.mode == "adaptive":
            if self.theta is not None or self.p is None:
                raise ParameterError("adaptive mode needs p and no theta")
            object.__setattr__(self, "p", check_open_unit(self.p, "p"))
        else:
            raise ParameterError(f"unknown dropout mode {self.mode!r}")

    @classmethod
    def fixed(cls, theta):
        return cls(mode="fixed", theta=theta)

    @classmethod
    def adaptive(cls, p):
        return cls(mode="adaptive", p=p)

    def retain_probability(self, d):
        if self.mode == "fixed":
            return self.theta
        from .adaptive import theta_of_d

        return theta_of_d(self.p, d)

    def to_dict(self):
        return {"mode": self.mode, "theta": self.theta, "p": self.p}


def _as_factors(F):
    if not isinstance(F, FactorPair):
        raise ParameterError(f"expected a FactorPair, got {type(F).__name__}")
    return F


def omega_dropout(F):
    """Sum over columns of ``||u_k||^2 * ||v_k||^2``."""
    nu, nv = _as_factors(F).column_sq_norms()
    return float(np.dot(nu, nv))


def deterministic_objective(X, F, theta):
    """``||X - U V^T||_F^2 + (1 - theta)/theta * omega_dropout(F)``."""
    X = check_matrix(X)
    F = _as_factors(F)
    F.check_target(X)
    theta = check_open_unit(theta, "theta")
    R = X - F.product()
    return float(np.vdot(R, R)) + (1.0 - theta) / theta * omega_dropout(F)


def sampled_objective(X, F, theta, r):
    """``||X - (1/theta) U diag(r) V^T||_F^2`` for a single mask `r`."""
    X = check_matrix(X)
    F = _as_factors(F)
    F.check_target(X)
    theta = check_open_unit(theta, "theta")
    r = check_mask(r, F.d)
    R = X - ((F.U * r) @ F.V.T) / theta
    return float(np.vdot(R, R))


def _batch_sampled(X, F, theta, masks):
    """Sampled objective for every row of `masks`; shape (n_masks,)."""
    P = np.einsum("ik,bk,jk->bij", F.U, masks, F.V, optimize=True)
    R = X[None, :, :] - P / theta
    return np.einsum("bij,bij->b", R, R)


def _chunk_size(X):
    return max(1, min(4096, 2_000_000 // X.size))


def exact_expected_objective(X, F, theta, max_d=MAX_ENUMERATION_D):
    """Expectation of :func:`sampled_objective` by enumerating all ``2**d`` masks.

    Mask weights ``theta**|r| (1-theta)**(d-|r|)`` are formed in log space;
    the weighted terms are accumulated with :func:`math.fsum`.

    Raises
    ------
    CapacityError
        If ``d > max_d``; use :func:`monte_carlo_objective` instead.
    """
    X = check_matrix(X)
    F = _as_factors(F)
    F.check_target(X)
    theta = check_open_unit(theta, "theta")
    d = F.d
    if d > max_d:
        raise CapacityError(
            f"d={d} exceeds the enumeration bound {max_d}; use monte_carlo_objective"
        )
    log_t, log_1mt = math.log(theta), math.log1p(-theta)
    terms = []
    chunk = _chunk_size(X)
    masks_iter = itertools.product((0.0, 1.0), repeat=d)
    while True:
        block = np.array(list(itertools.islice(masks_iter, chunk)))
        if block.size == 0:
            break
        k = block.sum(axis=1)
        weights = np.exp(k * log_t + (d - k) * log_1mt)
        terms.extend((weights * _batch_sampled(X, F, theta, block)).tolist())
    return math.fsum(terms)


def monte_carlo_objective(X, F, theta, n_samples, rng):
    """Sample mean and standard error of the sampled objective over i.i.d. masks.

    Returns
    -------
    mean : float
    std_error : float
        Sample standard deviation (ddof=1) divided by ``sqrt(n_samples)``.
    """
    X = check_matrix(X)
    F = _as_factors(F)
    F.check_target(X)
    theta = check_open_unit(theta, "theta")
    n_samples = check_positive_int(n_samples, "n_samples")
    if n_samples < 2:
        raise ParameterError("n_samples must be at least 2")
    values = np.empty(n_samples)
    chunk = _chunk_size(X)
    for start in range(0, n_samples, chunk):
        stop = min(n_samples, start + chunk)
        masks = sample_bernoulli_matrix(stop - start, F.d, theta, rng).astype(np.float64)
        values[start:stop] = _batch_sampled(X, F, theta, masks)
    mean = math.fsum(values) / n_samples
    std_error = float(np.std(values, ddof=1)) / math.sqrt(n_samples)
    return mean, std_error
