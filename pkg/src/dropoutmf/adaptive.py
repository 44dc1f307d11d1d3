"""Size-dependent retain probability and the associated parameter maps.

With ``theta(d) = p / (d - (d - 1) p)`` the dropout penalty weight becomes
``(1 - theta(d)) / theta(d) = d (1 - p) / p``, which exactly compensates the
halving of ``omega_dropout`` under column duplication. The smallest value of
the adapted penalty over exact factorizations of ``A`` is
``(1 - p)/p * ||A||_*^2``; :func:`balanced_factorization` attains it.
"""

import math

import numpy as np

from ._validation import check_matrix, check_nonnegative, check_open_unit, check_positive_int
from .exceptions import BoundaryError, ParameterError
from .matrix_core import svd
from .objective import FactorPair, omega_dropout


def theta_of_d(p, d):
    """Retain probability for a factorization with `d` columns."""
    p = check_open_unit(p, "p")
    d = check_positive_int(d, "d")
    return p / (d - (d - 1) * p)


def p_of_theta(theta, d):
    """Invert :func:`theta_of_d`: the `p` that yields `theta` at size `d`."""
    theta = check_open_unit(theta, "theta")
    d = check_positive_int(d, "d")
    return d * theta / (1.0 + (d - 1) * theta)


def lambda_of_theta(theta):
    """Penalty weight ``(1 - theta) / theta`` induced by retain probability `theta`."""
    theta = check_open_unit(theta, "theta")
    return (1.0 - theta) / theta


def theta_of_lambda(lam):
    """Inverse of :func:`lambda_of_theta`; ``lam = 0`` (no dropout) is rejected."""
    lam = check_nonnegative(lam, "lambda")
    if lam == 0.0:
        raise BoundaryError("lambda=0 maps to theta=1, which is excluded")
    return 1.0 / (1.0 + lam)


def gamma_of_p(p):
    """Weight ``(1 - p) / p`` of the squared nuclear norm."""
    p = check_open_unit(p, "p")
    return (1.0 - p) / p


def adapted_penalty(F, p):
    """Dropout penalty evaluated with the adaptive retain probability ``theta(F.d)``."""
    theta = theta_of_d(p, F.d)
    return (1.0 - theta) / theta * omega_dropout(F)


def envelope_value(X, p):
    """``(1 - p)/p * ||X||_*^2``, the lower convex envelope of the adapted penalty."""
    from .nuclear import nuclear_norm

    return gamma_of_p(p) * nuclear_norm(X) ** 2


def equal_diagonal_rotation(weights, d):
    """Orthogonal ``Q`` such that ``Q.T @ diag(w) @ Q`` has a constant diagonal.

    `weights` (length ``r <= d``) are zero-padded to length `d`. Pairwise plane
    rotations fix one diagonal entry to the mean per step, so at most ``d - 1``
    rotations are applied.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size > d:
        raise ParameterError(f"need a vector of at most d={d} weights, got shape {w.shape}")
    if np.any(w < 0):
        raise ParameterError("weights must be non-negative")
    g = np.zeros(d)
    g[: w.size] = w
    H = np.diag(g)
    Q = np.eye(d)
    target = g.sum() / d
    tol = 1e-13 * max(target, np.finfo(float).tiny)
    for _ in range(d - 1):
        diag = np.diag(H)
        above = np.flatnonzero(diag > target + tol)
        below = np.flatnonzero(diag < target - tol)
        if above.size == 0 or below.size == 0:
            break
        i = above[np.argmax(diag[above])]
        j = below[np.argmin(diag[below])]
        a, b, c = diag[i] - target, H[i, j], diag[j] - target
        # rotated H[i, i] - target = a + 2 b t + c t^2 with t = tan(angle); a > 0 > c
        t = (-b - math.sqrt(b * b - a * c)) / c
        cos = 1.0 / math.sqrt(1.0 + t * t)
        sin = t * cos
        G = np.eye(d)
        G[i, i] = G[j, j] = cos
        G[j, i] = sin
        G[i, j] = -sin
        Q = Q @ G
        H = G.T @ H @ G
        H[i, i] = target
    return Q


def balanced_factorization(A, d, rank=None):
    """Exact factorization of `A` (or its rank-`rank` truncation) with equal columns.

    Every column pair satisfies ``||u_k|| = ||v_k||`` and
    ``||u_k|| ||v_k|| = ||A_r||_* / d``, so the factorization attains both the
    variational form of the nuclear norm and the minimum
    ``(1 - p)/p * ||A_r||_*^2`` of the adapted penalty at size `d`.

    Parameters
    ----------
    A : array-like of shape (m, n)
    d : int
        Number of columns; must be at least the retained rank.
    rank : int, optional
        Truncation rank. Defaults to the number of singular values above
        ``1e-12 * sigma_1``.
    """
    A = check_matrix(A, "A")
    d = check_positive_int(d, "d")
    res = svd(A)
    if rank is None:
        top = res.sigma[0] if res.sigma.size else 0.0
        rank = int(np.count_nonzero(res.sigma > 1e-12 * top)) if top > 0 else 0
    if rank > d:
        raise ParameterError(f"d={d} is smaller than the retained rank {rank}")
    m, n = A.shape
    if rank == 0:
        return FactorPair(np.zeros((m, d)), np.zeros((n, d)))
    s = res.sigma[:rank]
    Q = equal_diagonal_rotation(s, d)
    C = np.sqrt(s)[:, None] * Q[:rank, :]
    return FactorPair(res.L[:, :rank] @ C, res.R[:, :rank] @ C)
