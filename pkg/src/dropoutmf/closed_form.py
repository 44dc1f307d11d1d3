"""Closed-form minimizer of ``||X - A||_F^2 + (1 - p)/p * ||A||_*^2``.

The solution keeps the singular vectors of ``X`` and soft-thresholds the
singular values by a data-dependent level ``mu``::

    d_bar = largest d with sigma_d > (1-p) / (p + (1-p) d) * sum_{i<=d} sigma_i
    mu    = (1-p) / (p + (1-p) d_bar) * sum_{i<=d_bar} sigma_i
    A_opt = L max(Sigma - mu, 0) R^T

:func:`solve_convex_iterative` is an independent proximal-gradient solver of
the same problem, used to cross-check the closed form.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._validation import check_matrix, check_nonnegative, check_open_unit
from .exceptions import ConvergenceError, ParameterError, ShapeError
from .matrix_core import SvdResult, svd


@dataclass(frozen=True)
class ShrinkageSolution:
    A_opt: np.ndarray
    mu: float
    d_bar: int
    shrunk_sigma: np.ndarray
    sigma: np.ndarray
    p: float
    decomposition: SvdResult = None

    @property
    def gamma(self):
        return (1.0 - self.p) / self.p


def shrinkage(sigma, mu):
    """``max(sigma - mu, 0)``; works elementwise on arrays."""
    mu = check_nonnegative(mu, "mu")
    s = np.asarray(sigma, dtype=np.float64)
    if np.any(s < 0):
        raise ParameterError("sigma must be non-negative")
    out = np.maximum(s - mu, 0.0)
    return float(out) if out.ndim == 0 else out


def _check_spectrum(sigma):
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim != 1:
        raise ParameterError("sigma must be a vector")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ParameterError("sigma must be finite and non-negative")
    if np.any(np.diff(s) > 0):
        raise ParameterError("sigma must be sorted in descending order")
    return s


def _threshold(sigma, p, k):
    return (1.0 - p) / (p + (1.0 - p) * k) * np.sum(sigma[:k])


def compute_d_bar(sigma, p):
    """Number of singular values that survive the shrinkage.

    A linear scan keeps the largest index satisfying the strict inequality;
    values tied with the threshold are not counted. Returns 0 iff
    ``sigma[0] == 0`` (or `sigma` is empty).
    """
    s = _check_spectrum(sigma)
    p = check_open_unit(p, "p")
    d_bar = 0
    for k in range(1, s.size + 1):
        if s[k - 1] > _threshold(s, p, k):
            d_bar = k
    return d_bar


def compute_mu(sigma, p, d_bar):
    """Shrinkage level for a given `d_bar`; 0 when ``d_bar == 0``."""
    s = _check_spectrum(sigma)
    p = check_open_unit(p, "p")
    if d_bar == 0:
        return 0.0
    return float(_threshold(s, p, d_bar))


def solve_closed_form(X, p):
    """Global minimizer of the squared-nuclear-norm regularized approximation."""
    X = check_matrix(X)
    p = check_open_unit(p, "p")
    res = svd(X)
    d_bar = compute_d_bar(res.sigma, p)
    mu = compute_mu(res.sigma, p, d_bar)
    shrunk = shrinkage(res.sigma, mu)
    # entries past d_bar are clamped explicitly so rank(A_opt) == d_bar even on exact ties
    shrunk[d_bar:] = 0.0
    A_opt = res.reconstruct(shrunk)
    return ShrinkageSolution(
        A_opt=A_opt, mu=mu, d_bar=d_bar, shrunk_sigma=shrunk, sigma=res.sigma, p=p,
        decomposition=res,
    )


def convex_objective(X, A, p):
    """``||X - A||_F^2 + (1 - p)/p * ||A||_*^2``."""
    X = check_matrix(X)
    A = check_matrix(A, "A")
    if X.shape != A.shape:
        raise ShapeError(f"X has shape {X.shape} but A has shape {A.shape}")
    p = check_open_unit(p, "p")
    R = X - A
    nuc = float(np.sum(svd(A).sigma))
    return float(np.vdot(R, R)) + (1.0 - p) / p * nuc**2


def prox_squared_nuclear(Y, weight):
    """``argmin_A 0.5 ||A - Y||_F^2 + weight * ||A||_*^2``.

    On the singular values the optimality conditions read
    ``s_i = max(y_i - 2 weight S, 0)`` with ``S = sum_i s_i``; the scalar
    ``S`` is found by bracketing root search.
    """
    res = svd(Y)
    y = res.sigma
    total = float(np.sum(y))
    if total == 0.0 or weight == 0.0:
        return res.reconstruct(y)

    def gap(S):
        return np.sum(np.maximum(y - 2.0 * weight * S, 0.0)) - S

    S = brentq(gap, 0.0, total, xtol=1e-15 * total, rtol=4 * np.finfo(float).eps, maxiter=500)
    return res.reconstruct(np.maximum(y - 2.0 * weight * S, 0.0))


def solve_convex_iterative(X, p, tol=1e-8, max_iter=10000):
    """Proximal-gradient solver for the same problem as :func:`solve_closed_form`.

    Step size is ``1 / (2 L)`` with ``L = 2`` the smoothness constant of the
    squared residual. Stops once ``||A_{t+1} - A_t||_F <= tol``.

    Raises
    ------
    ConvergenceError
        After `max_iter` iterations without meeting `tol`.
    """
    X = check_matrix(X)
    p = check_open_unit(p, "p")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    gamma = (1.0 - p) / p
    step = 1.0 / (2.0 * 2.0)
    A = np.zeros_like(X)
    for it in range(1, max_iter + 1):
        Y = A - step * 2.0 * (A - X)
        A_next = prox_squared_nuclear(Y, step * gamma)
        delta = np.linalg.norm(A_next - A)
        A = A_next
        if delta <= tol:
            return A
    raise ConvergenceError(
        f"proximal gradient did not reach tol={tol} in {max_iter} iterations", iterations=max_iter
    )
