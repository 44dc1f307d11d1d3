"""Dense matrix substrate: norms, SVD, seeded Bernoulli masks and CSV I/O.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 (row-major by
default). Random state is a ``numpy.random.Generator`` backed by PCG64, whose
output stream is specified bit-for-bit independently of platform.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._validation import check_matrix, check_open_unit, check_positive_int
from .exceptions import ConvergenceError, ParameterError, ShapeError


def frobenius_norm_sq(A):
    """Sum of squared entries of `A`."""
    A = check_matrix(A, "A")
    return float(np.vdot(A, A))


@dataclass(frozen=True)
class SvdResult:
    """Thin singular value decomposition ``A = L @ diag(sigma) @ R.T``.

    Attributes
    ----------
    L : ndarray of shape (m, k)
        Left singular vectors (orthonormal columns), ``k = min(m, n)``.
    sigma : ndarray of shape (k,)
        Singular values, non-negative and sorted in descending order.
    R : ndarray of shape (n, k)
        Right singular vectors (orthonormal columns).
    """

    L: np.ndarray
    sigma: np.ndarray
    R: np.ndarray

    def reconstruct(self, sigma=None):
        s = self.sigma if sigma is None else np.asarray(sigma, dtype=np.float64)
        return (self.L * s) @ self.R.T


def _fix_signs(L, R):
    # first nonzero entry of every left vector is made non-negative
    L = L.copy()
    R = R.copy()
    for k in range(L.shape[1]):
        nz = np.flatnonzero(L[:, k])
        if nz.size and L[nz[0], k] < 0:
            L[:, k] = -L[:, k]
            R[:, k] = -R[:, k]
    return L, R


def _complete_orthonormal(Q, filled):
    """Replace the columns of `Q` not flagged in `filled` by an orthonormal completion."""
    m, k = Q.shape
    if filled.all():
        return Q
    basis = Q[:, filled]
    # project the identity onto the orthogonal complement and pick a basis from it
    P = np.eye(m) - basis @ basis.T
    extra, _, _ = np.linalg.svd(P, full_matrices=False)
    out = Q.copy()
    out[:, ~filled] = extra[:, : (~filled).sum()]
    return out


def jacobi_svd(A, tol=1e-15, max_sweeps=60):
    """One-sided (Hestenes) Jacobi SVD.

    Slower than LAPACK but self-contained; used as a fallback when the LAPACK
    drivers fail and as a cross-check in the test-suite.
    """
    A = check_matrix(A, "A")
    m, n = A.shape
    if m < n:
        res = jacobi_svd(A.T, tol=tol, max_sweeps=max_sweeps)
        L, R = _fix_signs(res.R, res.L)
        return SvdResult(L=L, sigma=res.sigma, R=R)

    W = A.copy()
    V = np.eye(n)
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = W[:, i] @ W[:, i]
                beta = W[:, j] @ W[:, j]
                gamma = W[:, i] @ W[:, j]
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                wi = W[:, i].copy()
                W[:, i] = c * wi - s * W[:, j]
                W[:, j] = s * wi + c * W[:, j]
                vi = V[:, i].copy()
                V[:, i] = c * vi - s * V[:, j]
                V[:, j] = s * vi + c * V[:, j]
        if not rotated:
            break
    else:
        raise ConvergenceError(
            f"Jacobi SVD did not converge after {max_sweeps} sweeps", iterations=max_sweeps
        )

    sigma = np.linalg.norm(W, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    W = W[:, order]
    V = V[:, order]
    scale = sigma[0] if sigma.size and sigma[0] > 0 else 1.0
    filled = sigma > 1e-300 * scale
    L = np.zeros_like(W)
    L[:, filled] = W[:, filled] / sigma[filled]
    L = _complete_orthonormal(L, filled)
    L, V = _fix_signs(L, V)
    return SvdResult(L=L, sigma=sigma, R=V)


def svd(A):
    """Thin SVD with descending singular values and a fixed sign convention.

    LAPACK ``gesdd`` is tried first, then ``gesvd``, then one-sided Jacobi.
    Tiny singular values are returned as computed; truncation is left to the
    caller.

    Raises
    ------
    ConvergenceError
        If every driver fails; carries the Jacobi sweep count.
    """
    A = check_matrix(A, "A")
    for driver in ("gesdd", "gesvd"):
        try:
            L, sigma, Rt = scipy.linalg.svd(
                A, full_matrices=False, lapack_driver=driver, check_finite=False
            )
        except np.linalg.LinAlgError:
            continue
        L, R = _fix_signs(L, Rt.T)
        return SvdResult(L=L, sigma=np.maximum(sigma, 0.0), R=R)
    return jacobi_svd(A)


def make_rng(seed=None):
    """Return a PCG64-backed generator.

    `seed` may be an int, a ``SeedSequence`` or an existing ``Generator``
    (returned unchanged so callers can thread one state through).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed, n):
    """Derive `n` independent child generators from a single seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(n)]


def sample_bernoulli_vector(d, theta, rng):
    """Draw a length-`d` vector of i.i.d. Bernoulli(`theta`) entries (dtype int8)."""
    d = check_positive_int(d, "d")
    theta = check_open_unit(theta, "theta")
    return (rng.random(d) < theta).astype(np.int8)


def sample_bernoulli_matrix(n, d, theta, rng):
    """Draw `n` masks at once, one per row."""
    theta = check_open_unit(theta, "theta")
    return (rng.random((n, d)) < theta).astype(np.int8)


def read_matrix_csv(path):
    """Read a header-free CSV of reals into a 2-D array.

    Raises
    ------
    ShapeError
        On ragged rows or an empty file.
    ParameterError
        On non-numeric or non-finite entries.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise ParameterError(f"{path}:{lineno}: non-numeric entry ({exc})") from None
            if rows and len(values) != len(rows[0]):
                raise ShapeError(
                    f"{path}:{lineno}: ragged row with {len(values)} entries, expected {len(rows[0])}"
                )
            rows.append(values)
    if not rows:
        raise ShapeError(f"{path}: no data rows")
    return check_matrix(np.array(rows), name=str(path))


def write_matrix_csv(path, A):
    A = check_matrix(A, "A")
    np.savetxt(path, A, delimiter=",", fmt="%.17g")
