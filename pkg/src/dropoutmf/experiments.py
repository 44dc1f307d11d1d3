"""Desk-scale reproductions of the dropout / nuclear-norm experiments.

Every runner returns an :class:`ExperimentReport` whose ``parameters`` and
``provenance`` are sufficient to rerun it bit-for-bit.
"""

import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._validation import check_matrix, check_open_unit, check_positive_int
from .adaptive import balanced_factorization, p_of_theta, theta_of_d
from .closed_form import solve_closed_form
from .exceptions import ParameterError
from .matrix_core import make_rng, read_matrix_csv, svd
from .objective import DropoutConfig, FactorPair, deterministic_objective, exact_expected_objective
from .trainer import Constant, Diminishing, TrainConfig, train_deterministic, train_dropout

SCHEMA_VERSION = 1

FIG1_THETAS = (0.1, 0.3, 0.5, 0.7, 0.9)
FIG1_SIZES = (10, 40, 160)


@dataclass(frozen=True)
class SyntheticSpec:
    m: int = 100
    n: int = 100
    true_rank: int = 10
    signal_std: float = 0.1
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.m, "m")
        check_positive_int(self.n, "n")
        check_positive_int(self.true_rank, "true_rank")
        if self.true_rank > min(self.m, self.n):
            raise ParameterError(f"true_rank={self.true_rank} exceeds min(m, n)={min(self.m, self.n)}")
        if not self.signal_std > 0:
            raise ParameterError("signal_std must be positive")
        if not self.noise_std >= 0:
            raise ParameterError("noise_std must be non-negative")


def generate_synthetic(spec):
    """``X = U0 V0^T + Z0`` with Gaussian factors and optional Gaussian noise."""
    rng = make_rng(spec.seed)
    U0 = rng.normal(0.0, spec.signal_std, size=(spec.m, spec.true_rank))
    V0 = rng.normal(0.0, spec.signal_std, size=(spec.n, spec.true_rank))
    X = U0 @ V0.T
    if spec.noise_std > 0:
        X = X + rng.normal(0.0, spec.noise_std, size=(spec.m, spec.n))
    return X


def numerical_rank(sigma, cutoff=1e-3):
    """Count of singular values above ``cutoff * sigma[0]``."""
    sigma = np.asarray(sigma)
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.count_nonzero(sigma > cutoff * sigma[0]))


def relative_distance(A, B):
    """``||A - B||_F / ||B||_F`` (absolute distance when ``B == 0``)."""
    nb = np.linalg.norm(B)
    diff = np.linalg.norm(np.asarray(A) - np.asarray(B))
    return float(diff / nb) if nb > 0 else float(diff)


def _child_seed(seed, *key):
    return int(np.random.SeedSequence([seed, *key]).generate_state(1, dtype=np.uint64)[0])


def _cell_rng(seed, index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass
class ExperimentReport:
    experiment: str
    parameters: dict
    results: dict
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "parameters": self.parameters,
            "results": self.results,
            "provenance": self.provenance,
        }

    def check_finite(self):
        """Raise ``ValueError`` if any numeric leaf is NaN or infinite."""

        def walk(node, path):
            if isinstance(node, dict):
                for k, v in node.items():
                    walk(v, f"{path}.{k}")
            elif isinstance(node, (list, tuple)):
                for i, v in enumerate(node):
                    walk(v, f"{path}[{i}]")
            elif isinstance(node, float) and not math.isfinite(node):
                raise ValueError(f"non-finite value at {path}")

        walk(self.to_dict(), "report")
        return self


def _provenance(seed, t0):
    return {
        "seed": seed,
        "wall_time": time.perf_counter() - t0,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
    }


def run_check_equivalence(n_instances=200, max_m=8, max_n=8, max_d=12, thetas=(0.1, 0.5, 0.9), seed=0):
    """Compare the enumerated expectation with the closed-form objective on random instances."""
    t0 = time.perf_counter()
    rng = make_rng(seed)
    rows = []
    for i in range(n_instances):
        m = int(rng.integers(1, max_m + 1))
        n = int(rng.integers(1, max_n + 1))
        d = int(rng.integers(1, max_d + 1))
        theta = float(thetas[i % len(thetas)])
        X = rng.normal(size=(m, n))
        F = FactorPair(rng.normal(size=(m, d)), rng.normal(size=(n, d)))
        exact = exact_expected_objective(X, F, theta)
        det = deterministic_objective(X, F, theta)
        rows.append(
            {"m": m, "n": n, "d": d, "theta": theta, "exact": exact, "deterministic": det,
             "relative_error": abs(exact - det) / det}
        )
    worst = max(r["relative_error"] for r in rows)
    return ExperimentReport(
        experiment="check-equivalence",
        parameters={"n_instances": n_instances, "max_m": max_m, "max_n": max_n, "max_d": max_d,
                    "thetas": list(thetas), "seed": seed},
        results={"instances": rows, "max_relative_error": worst},
        provenance=_provenance(seed, t0),
    ).check_finite()


def _fig1_cell(X, theta, d, iterations, eps0, tau, ema_decay, seed, index, tolerance, stride):
    config = TrainConfig(
        n_components=d,
        dropout=DropoutConfig.fixed(theta),
        iterations=iterations,
        schedule=Diminishing(eps0=eps0, tau=tau),
        ema_decay=ema_decay,
    )
    stoch = train_dropout(X, config, rng=_cell_rng(seed, index))
    det = train_deterministic(X, config, rng=_cell_rng(seed, index))
    ema_final = float(stoch.ema_trace[-1])
    det_final = float(det.deterministic_trace[-1])
    own_final = float(stoch.deterministic_trace[-1])
    gap = abs(ema_final - det_final) / det_final
    return {
        "theta": theta,
        "d": d,
        "final_ema": ema_final,
        "final_deterministic": det_final,
        "final_deterministic_at_dropout_factors": own_final,
        "relative_gap": gap,
        "relative_gap_same_run": abs(ema_final - own_final) / own_final,
        "tracks": bool(gap <= tolerance),
        "schedule": stoch.schedule,
        "wall_time": stoch.wall_time + det.wall_time,
        "trace": {
            "iteration": list(range(1, iterations + 1, stride)),
            "stochastic": stoch.stochastic_trace[::stride].tolist(),
            "ema": stoch.ema_trace[::stride].tolist(),
            "deterministic": det.deterministic_trace[::stride].tolist(),
        },
    }


def run_fig1(theta_list=FIG1_THETAS, d_list=FIG1_SIZES, iterations=10000, seed=0, m=100, n=100,
             signal_std=0.1, tolerance=0.05, ema_decay=0.999, eps0=None, tau=1000.0,
             trace_stride=1, n_jobs=1):
    """Stochastic versus deterministic dropout training over a (theta, d) grid.

    For each size ``d`` the data are ``U0 V0^T`` with inner dimension
    ``min(d, m, n)``. Both formulations start from the same initialization
    and share the step schedule. A cell *tracks* when the final EMA of the
    stochastic objective is within `tolerance` (relative) of the final
    deterministic objective.
    """
    t0 = time.perf_counter()
    for theta in theta_list:
        check_open_unit(theta, "theta")
    cells = []
    data = {}
    for j, d in enumerate(d_list):
        check_positive_int(d, "d")
        spec = SyntheticSpec(m=m, n=n, true_rank=min(d, m, n), signal_std=signal_std,
                             noise_std=0.0, seed=_child_seed(seed, j))
        data[d] = generate_synthetic(spec)
        for theta in theta_list:
            cells.append((theta, d))

    args = [
        (data[d], theta, d, iterations, eps0, tau, ema_decay, seed, idx, tolerance, trace_stride)
        for idx, (theta, d) in enumerate(cells)
    ]
    if n_jobs == 1:
        results = [_fig1_cell(*a) for a in args]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_fig1_cell)(*a) for a in args)

    return ExperimentReport(
        experiment="fig1",
        parameters={"theta_list": list(theta_list), "d_list": list(d_list), "iterations": iterations,
                    "seed": seed, "m": m, "n": n, "signal_std": signal_std, "tolerance": tolerance,
                    "ema_decay": ema_decay, "eps0": eps0, "tau": tau, "trace_stride": trace_stride},
        results={"cells": results, "all_track": all(c["tracks"] for c in results)},
        provenance=_provenance(seed, t0),
    ).check_finite()


def fig3_data(seed=0, m=100, n=100, true_rank=10, signal_std=0.1, noise_std=0.01):
    return generate_synthetic(SyntheticSpec(m=m, n=n, true_rank=true_rank, signal_std=signal_std,
                                            noise_std=noise_std, seed=seed))


def svd_informed_init(X, d, rank):
    """Balanced equal-column factorization of the rank-`rank` truncation of `X`."""
    return balanced_factorization(X, d, rank=rank)


def run_fig3(p=0.9, d_list=(20,), seed=0, theta_fixed=None, iterations=400000, eps0=None, tau=200.0,
             rank_cutoff=1e-3, m=100, n=100, true_rank=10, signal_std=0.1, noise_std=0.01,
             init="random"):
    """Singular spectra of fixed-rate dropout, adaptive-rate dropout and the closed form.

    ``init="svd"`` starts both runs from :func:`svd_informed_init` at rank
    `true_rank` instead of the Gaussian initialization.
    """
    t0 = time.perf_counter()
    p = check_open_unit(p, "p")
    theta_fixed = p if theta_fixed is None else check_open_unit(theta_fixed, "theta_fixed")
    if init not in ("random", "svd"):
        raise ParameterError(f"init must be 'random' or 'svd', got {init!r}")
    X = fig3_data(seed, m, n, true_rank, signal_std, noise_std)
    sol = solve_closed_form(X, p)
    A_opt = sol.A_opt
    x_sigma = svd(X).sigma
    per_d = []
    for j, d in enumerate(d_list):
        check_positive_int(d, "d")
        start = svd_informed_init(X, d, min(true_rank, d)) if init == "svd" else None
        runs = {}
        for label, dropout in (("fixed", DropoutConfig.fixed(theta_fixed)), ("adaptive", DropoutConfig.adaptive(p))):
            config = TrainConfig(n_components=d, dropout=dropout, iterations=iterations,
                                 schedule=Diminishing(eps0=eps0, tau=tau))
            report = train_dropout(X, config, rng=_cell_rng(seed, j), init=start)
            P = report.final_factors.product()
            sigma = svd(P).sigma
            runs[label] = {
                "theta": report.theta,
                "schedule": report.schedule,
                "spectrum": sigma.tolist(),
                "numerical_rank": numerical_rank(sigma, rank_cutoff),
                "relative_distance_to_closed_form": relative_distance(P, A_opt),
                "final_deterministic": float(report.deterministic_trace[-1]),
                "final_ema": float(report.ema_trace[-1]),
                "wall_time": report.wall_time,
            }
        per_d.append({"d": d, "theta_adaptive": theta_of_d(p, d), **runs})

    return ExperimentReport(
        experiment="fig3",
        parameters={"p": p, "d_list": list(d_list), "seed": seed, "theta_fixed": theta_fixed,
                    "iterations": iterations, "eps0": eps0, "tau": tau, "rank_cutoff": rank_cutoff,
                    "m": m, "n": n, "true_rank": true_rank, "signal_std": signal_std,
                    "noise_std": noise_std, "init": init},
        results={
            "data_spectrum": x_sigma.tolist(),
            "closed_form": {
                "spectrum": sol.shrunk_sigma.tolist(),
                "mu": sol.mu,
                "d_bar": sol.d_bar,
                "numerical_rank": numerical_rank(sol.shrunk_sigma, rank_cutoff),
            },
            "runs": per_d,
        },
        provenance=_provenance(seed, t0),
    ).check_finite()


def run_reconstruct(matrix_csv_path, thetas=(0.5, 0.8), d=40, epochs=100, alternating_block=50,
                    lr=1e-4, seed=0, max_rows=2000, init_std=0.1):
    """Dropout factorization of a user matrix against the matching closed form.

    Rows beyond `max_rows` are subsampled without replacement. Each epoch
    runs `alternating_block` U-only then `alternating_block` V-only updates
    (one joint update when the block is 0). For each retain probability the
    closed form uses ``p`` obtained by inverting ``theta(d)`` at the given
    ``(theta, d)``. The dropout reconstruction is ``U V^T``, the expectation
    of the ``1/theta``-rescaled masked product.
    """
    t0 = time.perf_counter()
    X = read_matrix_csv(matrix_csv_path)
    rng = make_rng(seed)
    rows_used = X.shape[0]
    if max_rows is not None and X.shape[0] > max_rows:
        keep = np.sort(rng.choice(X.shape[0], size=max_rows, replace=False))
        X = X[keep]
        rows_used = max_rows
    X = check_matrix(X)
    iterations = epochs * (2 * alternating_block if alternating_block > 0 else 1)
    results = []
    for j, theta in enumerate(thetas):
        theta = check_open_unit(theta, "theta")
        config = TrainConfig(n_components=d, dropout=DropoutConfig.fixed(theta), iterations=iterations,
                             schedule=Constant(lr), init_std=init_std,
                             alternating_block=alternating_block)
        report = train_dropout(X, config, rng=_cell_rng(seed, j))
        recon = report.final_factors.product()
        p = p_of_theta(theta, d)
        sol = solve_closed_form(X, p)
        results.append({
            "theta": theta,
            "p": p,
            "gamma": (1.0 - p) / p,
            "d_bar": sol.d_bar,
            "mu": sol.mu,
            "mse_dropout": float(np.mean((X - recon) ** 2)),
            "mse_closed_form": float(np.mean((X - sol.A_opt) ** 2)),
            "mse_gap": float(np.mean((recon - sol.A_opt) ** 2)),
            "relative_distance": relative_distance(recon, sol.A_opt),
            "final_deterministic": float(report.deterministic_trace[-1]),
            "wall_time": report.wall_time,
        })
    return ExperimentReport(
        experiment="reconstruct",
        parameters={"matrix_csv_path": str(matrix_csv_path), "thetas": list(thetas), "d": d,
                    "epochs": epochs, "alternating_block": alternating_block, "lr": lr, "seed": seed,
                    "max_rows": max_rows, "rows_used": rows_used, "n_columns": X.shape[1],
                    "iterations": iterations, "init_std": init_std},
        results={"runs": results},
        provenance=_provenance(seed, t0),
    ).check_finite()
