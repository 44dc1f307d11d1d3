"""scikit-learn compatible estimators.

:class:`DropoutMF` learns ``X ~ W H`` (``W = U``, ``H = V^T``) with dropout
on the factor columns. :class:`SquaredNuclearShrinkage` computes the closed
form of the squared-nuclear-norm problem and exposes it as an adaptive PCA.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .adaptive import p_of_theta
from .closed_form import convex_objective, solve_closed_form
from .objective import DropoutConfig, FactorPair, deterministic_objective
from .trainer import Constant, Diminishing, TrainConfig, train_deterministic, train_dropout


class DropoutMF(TransformerMixin, BaseEstimator):
    """Matrix factorization trained with column dropout.

    Parameters
    ----------
    n_components : int, default=10
        Number of factor columns ``d``.
    theta : float, default=0.5
        Fixed retain probability. Ignored when `p` is set.
    p : float or None, default=None
        If set, use the adaptive retain probability ``theta(d)``.
    solver : {"sgd", "gd"}, default="sgd"
        ``"sgd"`` samples a mask per iteration; ``"gd"`` descends the
        expected (deterministic) objective.
    max_iter : int, default=10000
    learning_rate : float or None, default=None
        ``eps0`` of the schedule; None picks a curvature-based default.
    schedule : {"diminishing", "constant"}, default="diminishing"
    tau : float, default=1.0
        Plateau length of the diminishing schedule.
    init : {"random"} or FactorPair, default="random"
    init_std : float, default=0.1
    ema_decay : float, default=0.99
    alternating_block : int, default=0
    random_state : int, Generator or None

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
        ``V^T``.
    embedding_ : ndarray of shape (n_samples, n_components)
        ``U`` for the training data.
    retain_probability_ : float
    penalty_weight_ : float
        ``(1 - theta) / theta``.
    report_ : TrainReport
    """

    def __init__(self, n_components=10, theta=0.5, p=None, solver="sgd", max_iter=10000,
                 learning_rate=None, schedule="diminishing", tau=1.0, init="random", init_std=0.1,
                 ema_decay=0.99, alternating_block=0, random_state=None):
        self.n_components = n_components
        self.theta = theta
        self.p = p
        self.solver = solver
        self.max_iter = max_iter
        self.learning_rate = learning_rate
        self.schedule = schedule
        self.tau = tau
        self.init = init
        self.init_std = init_std
        self.ema_decay = ema_decay
        self.alternating_block = alternating_block
        self.random_state = random_state

    def _config(self):
        dropout = DropoutConfig.adaptive(self.p) if self.p is not None else DropoutConfig.fixed(self.theta)
        if self.schedule == "constant":
            if self.learning_rate is None:
                raise ValueError("a constant schedule needs learning_rate")
            sched = Constant(self.learning_rate)
        elif self.schedule == "diminishing":
            sched = Diminishing(eps0=self.learning_rate, tau=self.tau)
        else:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        return TrainConfig(
            n_components=self.n_components,
            dropout=dropout,
            iterations=self.max_iter,
            schedule=sched,
            init_std=self.init_std,
            ema_decay=self.ema_decay,
            alternating_block=self.alternating_block,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        config = self._config()
        init = self.init if isinstance(self.init, FactorPair) else None
        if init is None and self.init != "random":
            raise ValueError(f"init must be 'random' or a FactorPair, got {self.init!r}")
        if self.solver == "sgd":
            report = train_dropout(X, config, rng=self.random_state, init=init)
        elif self.solver == "gd":
            report = train_deterministic(X, config, rng=self.random_state, init=init)
        else:
            raise ValueError(f"unknown solver {self.solver!r}")
        F = report.final_factors
        self.report_ = report
        self.embedding_ = F.U
        self.components_ = F.V.T
        self.retain_probability_ = config.theta
        self.penalty_weight_ = (1.0 - config.theta) / config.theta
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).embedding_

    def transform(self, X):
        """Codes minimizing the deterministic objective row by row, with ``V`` fixed.

        For one row ``x`` the problem is ridge regression
        ``min_w ||x - V w||^2 + lam * sum_k w_k^2 ||v_k||^2``.
        """
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        V = self.components_.T
        nv = np.einsum("ij,ij->j", V, V)
        G = V.T @ V + self.penalty_weight_ * np.diag(nv)
        return np.linalg.lstsq(G, V.T @ X.T, rcond=None)[0].T

    def inverse_transform(self, W):
        check_is_fitted(self, "components_")
        return np.asarray(W) @ self.components_

    def reconstruction(self):
        """``U V^T`` for the training data."""
        check_is_fitted(self, "components_")
        return self.embedding_ @ self.components_

    def objective(self, X):
        """Deterministic dropout objective at the fitted factors for training data `X`."""
        check_is_fitted(self, "components_")
        F = FactorPair(self.embedding_, self.components_.T)
        return deterministic_objective(X, F, self.retain_probability_)


class SquaredNuclearShrinkage(TransformerMixin, BaseEstimator):
    """Closed-form ``argmin_A ||X - A||_F^2 + (1 - p)/p ||A||_*^2``.

    Parameters
    ----------
    p : float, default=0.5
    theta, n_components : float and int, optional
        If both are given and `p` is None, ``p`` is obtained by inverting
        ``theta(d)`` at ``(theta, n_components)``.

    Attributes
    ----------
    solution_ : ShrinkageSolution
    components_ : ndarray of shape (d_bar, n_features)
        Right singular vectors kept by the shrinkage.
    singular_values_ : ndarray of shape (d_bar,)
        Shrunk singular values.
    n_components_ : int
        ``d_bar``.
    mu_ : float
    p_ : float
    """

    def __init__(self, p=0.5, theta=None, n_components=None):
        self.p = p
        self.theta = theta
        self.n_components = n_components

    def _resolve_p(self):
        if self.p is not None:
            return self.p
        if self.theta is None or self.n_components is None:
            raise ValueError("give p, or both theta and n_components")
        return p_of_theta(self.theta, self.n_components)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        p = self._resolve_p()
        sol = solve_closed_form(X, p)
        res = sol.decomposition
        k = sol.d_bar
        self.solution_ = sol
        self.p_ = p
        self.mu_ = sol.mu
        self.n_components_ = k
        self.components_ = res.R[:, :k].T
        self.singular_values_ = sol.shrunk_sigma[:k]
        self.shrink_ratio_ = sol.shrunk_sigma[:k] / res.sigma[:k] if k else np.zeros(0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Shrunk scores ``X R diag(S_mu(sigma) / sigma)``; for the training data ``L S_mu(Sigma)``."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        return (X @ self.components_.T) * self.shrink_ratio_

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        return np.asarray(Z) @ self.components_

    def objective(self, X):
        check_is_fitted(self, "solution_")
        return convex_objective(X, self.solution_.A_opt, self.p_)

