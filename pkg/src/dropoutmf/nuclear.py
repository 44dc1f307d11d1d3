"""Nuclear norm, its variational form and the column-duplication map."""

import numpy as np

from ._validation import check_matrix
from .matrix_core import svd
from .objective import FactorPair


def nuclear_norm(A):
    """Sum of singular values of `A`."""
    return float(np.sum(svd(check_matrix(A, "A")).sigma))


def variational_value(F):
    """``sum_k ||u_k|| * ||v_k||`` for a factor pair."""
    nu, nv = F.column_sq_norms()
    return float(np.sum(np.sqrt(nu * nv)))


def variational_factorization(A):
    """Factorization ``U = L sqrt(S)``, ``V = R sqrt(S)`` attaining the nuclear norm.

    The product reproduces `A` and :func:`variational_value` of the result
    equals :func:`nuclear_norm` of `A`.
    """
    res = svd(check_matrix(A, "A"))
    root = np.sqrt(res.sigma)
    return FactorPair(res.L * root, res.R * root)


def pathological_double(F):
    """Return ``(sqrt(2)/2 [U, U], sqrt(2)/2 [V, V])``.

    The product is unchanged while ``omega_dropout`` halves, so repeating the
    map drives the fixed-rate dropout penalty to zero without changing the fit.
    """
    c = np.sqrt(2.0) / 2.0
    return FactorPair(c * np.hstack([F.U, F.U]), c * np.hstack([F.V, F.V]))
