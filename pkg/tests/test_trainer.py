import itertools
import json

import numpy as np
import pytest

from dropoutmf.exceptions import DivergenceError, ParameterError, ShapeError
from dropoutmf.objective import DropoutConfig, FactorPair, deterministic_objective
from dropoutmf.trainer import (
    Constant,
    Diminishing,
    TrainConfig,
    default_eps0,
    deterministic_gradients,
    dropout_gradients,
    sgd_step,
    train_deterministic,
    train_dropout,
)

from conftest import rel


def small_problem(rng, m=6, n=5, d=3):
    X = rng.normal(size=(m, n))
    F = FactorPair(rng.normal(size=(m, d)), rng.normal(size=(n, d)))
    return X, F


def noisy_low_rank(seed, m=20, n=20, rank=3, noise=0.05):
    g = np.random.default_rng(seed)
    return g.normal(size=(m, rank)) @ g.normal(size=(rank, n)) + noise * g.normal(size=(m, n))


def test_zero_residual_gives_zero_blocks(rng):
    _, F = small_problem(rng)
    dU, dV = dropout_gradients(F.product(), F, np.ones(3))
    np.testing.assert_allclose(dU, 0, atol=1e-12)
    np.testing.assert_allclose(dV, 0, atol=1e-12)


def test_all_zero_mask_blocks(rng):
    X, F = small_problem(rng)
    dU, dV = dropout_gradients(X, F, np.zeros(3))
    np.testing.assert_allclose(dU, X @ F.V, rtol=1e-14)
    np.testing.assert_allclose(dV, X.T @ F.U, rtol=1e-14)


def test_masked_columns_are_frozen(rng):
    X, F = small_problem(rng, d=4)
    r = np.array([1, 0, 1, 0])
    dU, dV = dropout_gradients(X, F, r, scale=1 / 0.5)
    G = sgd_step(F, dU, dV, r, 0.01, 0.5)
    np.testing.assert_array_equal(G.U[:, [1, 3]], F.U[:, [1, 3]])
    np.testing.assert_array_equal(G.V[:, [1, 3]], F.V[:, [1, 3]])
    assert not np.allclose(G.U[:, [0, 2]], F.U[:, [0, 2]])


def test_all_zero_mask_and_zero_step_leave_factors(rng):
    X, F = small_problem(rng)
    dU, dV = dropout_gradients(X, F, np.zeros(3))
    G = sgd_step(F, dU, dV, np.zeros(3), 0.1, 0.5)
    np.testing.assert_array_equal(G.U, F.U)
    dU, dV = dropout_gradients(X, F, np.ones(3))
    G = sgd_step(F, dU, dV, np.ones(3), 0.0, 0.5)
    np.testing.assert_array_equal(G.V, F.V)


def test_single_entry_hand_example():
    X = np.array([[2.0]])
    F = FactorPair(np.array([[1.0]]), np.array([[1.0]]))
    dU, dV = dropout_gradients(X, F, [1])
    assert dU[0, 0] == 1.0 and dV[0, 0] == 1.0
    G = sgd_step(F, dU, dV, [1], 0.1, 0.5)
    assert G.U[0, 0] == pytest.approx(1.4, abs=1e-15)
    assert G.V[0, 0] == pytest.approx(1.4, abs=1e-15)


@pytest.mark.parametrize("theta", [0.2, 0.5, 0.85])
def test_expected_step_is_deterministic_gradient_step(rng, theta):
    """Averaging the update over all masks reproduces a gradient step on the deterministic objective."""
    X, F = small_problem(rng, d=4)
    eps = 0.01
    mean_U = np.zeros_like(F.U)
    mean_V = np.zeros_like(F.V)
    for bits in itertools.product((0, 1), repeat=4):
        r = np.array(bits)
        w = theta ** r.sum() * (1 - theta) ** (4 - r.sum())
        dU, dV = dropout_gradients(X, F, r, scale=1 / theta)
        G = sgd_step(F, dU, dV, r, eps, theta)
        mean_U += w * G.U
        mean_V += w * G.V
    gU, gV = deterministic_gradients(X, F, theta)
    np.testing.assert_allclose(mean_U, F.U - eps * gU, atol=1e-8 * np.abs(F.U).max())
    np.testing.assert_allclose(mean_V, F.V - eps * gV, atol=1e-8 * np.abs(F.V).max())


def central_differences(f, A, h):
    G = np.zeros_like(A)
    for idx in np.ndindex(A.shape):
        Ap = A.copy()
        Am = A.copy()
        Ap[idx] += h
        Am[idx] -= h
        G[idx] = (f(Ap) - f(Am)) / (2 * h)
    return G


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    g = np.random.default_rng(seed)
    X, F = small_problem(g)
    theta = float(g.uniform(0.1, 0.9))
    gU, gV = deterministic_gradients(X, F, theta)
    h = 1e-6 * max(1.0, np.abs(np.concatenate([F.U.ravel(), F.V.ravel()])).max())
    nU = central_differences(lambda U: deterministic_objective(X, FactorPair(U, F.V), theta), F.U, h)
    nV = central_differences(lambda V: deterministic_objective(X, FactorPair(F.U, V), theta), F.V, h)
    assert rel(gU, nU) <= 1e-5
    assert rel(gV, nV) <= 1e-5


def test_explicit_penalty_override(rng):
    X, F = small_problem(rng)
    gU, _ = deterministic_gradients(X, F, penalty=0.0)
    np.testing.assert_allclose(gU, -2 * (X - F.product()) @ F.V, rtol=1e-13)


def test_unregularized_limit_fits_exactly():
    g = np.random.default_rng(4)
    X = g.normal(size=(8, 2)) @ g.normal(size=(2, 6))
    config = TrainConfig(n_components=3, dropout=DropoutConfig.fixed(0.5), iterations=20000,
                         schedule=Constant(0.01), init_std=0.5)
    report = train_deterministic(X, config, rng=0, penalty=0.0)
    assert report.deterministic_trace[-1] <= 1e-8 * np.sum(X * X)


def test_descent_is_monotone_with_small_constant_step():
    g = np.random.default_rng(0)
    X = 0.1 * g.normal(size=(100, 10)) @ (0.1 * g.normal(size=(10, 100)))
    config = TrainConfig(n_components=10, dropout=DropoutConfig.fixed(0.5), iterations=2000,
                         schedule=Constant(0.05))
    trace = train_deterministic(X, config, rng=1).deterministic_trace
    assert np.all(np.diff(trace) <= 1e-15 * trace[0])
    assert trace[-1] < 0.5 * trace[0]


def test_near_unit_theta_matches_plain_gd():
    # full-rank data fitted at rank 5: the residual dominates the 1e-3 * omega penalty
    X = np.random.default_rng(2).normal(size=(20, 20))
    config = TrainConfig(n_components=5, dropout=DropoutConfig.fixed(0.999), iterations=4000,
                         schedule=Diminishing(tau=500.0))
    drop = train_dropout(X, config, rng=3)
    plain = train_deterministic(X, config, rng=3, penalty=0.0)
    np.testing.assert_array_equal(drop.final_factors.shape, plain.final_factors.shape)
    assert abs(drop.deterministic_trace[-1] - plain.deterministic_trace[-1]) <= 0.05 * plain.deterministic_trace[-1]


def test_same_seed_same_initialization():
    X = noisy_low_rank(1, m=7, n=5)
    config = TrainConfig(n_components=4, dropout=DropoutConfig.fixed(0.6), iterations=1)
    a = train_dropout(X, config, rng=11)
    b = train_deterministic(X, config, rng=11)
    assert a.deterministic_trace[0] == b.deterministic_trace[0]


def test_training_is_bitwise_reproducible(tmp_path):
    X = noisy_low_rank(5)
    config = TrainConfig(n_components=4, dropout=DropoutConfig.adaptive(0.8), iterations=300,
                         alternating_block=7)
    a = train_dropout(X, config, rng=21)
    b = train_dropout(X, config, rng=21)
    assert a.to_dict(include_factors=True) | {"wall_time": 0} == b.to_dict(include_factors=True) | {"wall_time": 0}
    a.to_json(tmp_path / "r.json")
    a.to_csv(tmp_path / "t.csv")
    assert json.loads((tmp_path / "r.json").read_text())["iterations"] == 300
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,stochastic,ema,deterministic" and len(lines) == 301


def test_ema_and_trace_shapes():
    X = noisy_low_rank(6, m=10, n=8)
    config = TrainConfig(n_components=3, dropout=DropoutConfig.fixed(0.4), iterations=50, ema_decay=0.9)
    r = train_dropout(X, config, rng=0)
    assert r.ema_trace[0] == r.stochastic_trace[0]
    np.testing.assert_allclose(r.ema_trace[1], 0.9 * r.ema_trace[0] + 0.1 * r.stochastic_trace[1])
    assert r.theta == 0.4 and r.iterations == 50


def test_alternating_blocks_freeze_the_other_factor():
    X = noisy_low_rank(7, m=9, n=6)
    init = FactorPair(np.full((9, 2), 0.1), np.full((6, 2), 0.1))
    config = TrainConfig(n_components=2, dropout=DropoutConfig.fixed(0.7), iterations=3,
                         alternating_block=3, schedule=Constant(1e-3))
    r = train_dropout(X, config, rng=0, init=init)
    np.testing.assert_array_equal(r.final_factors.V, init.V)
    r = train_deterministic(X, config, rng=0, init=init)
    np.testing.assert_array_equal(r.final_factors.V, init.V)
    assert not np.array_equal(r.final_factors.U, init.U)


def test_divergence_is_reported():
    X = noisy_low_rank(8)
    config = TrainConfig(n_components=5, dropout=DropoutConfig.fixed(0.5), iterations=2000,
                         schedule=Constant(50.0), init_std=1.0)
    with pytest.raises(DivergenceError) as info:
        train_dropout(X, config, rng=0)
    assert info.value.iteration is not None


def test_default_step_scale():
    X = np.diag([4.0, 1.0])
    assert default_eps0(X, 0.5) == pytest.approx(0.25 / 8)
    assert Diminishing().resolve(X, 0.5)(1) == pytest.approx(0.25 / 8)
    s = Diminishing(eps0=1.0)
    assert s(1) == 1.0 and s(4) == 0.25
    assert Diminishing(eps0=1.0, tau=10.0)(11) == 0.5


@pytest.mark.parametrize("kwargs", [
    {"n_components": 0},
    {"iterations": 0},
    {"init_std": 0.0},
    {"alternating_block": -1},
    {"ema_decay": 1.0},
])
def test_config_validation(kwargs):
    base = {"n_components": 2, "dropout": DropoutConfig.fixed(0.5)}
    with pytest.raises(ParameterError):
        TrainConfig(**(base | kwargs))


def test_init_shape_mismatch():
    X = noisy_low_rank(9, m=5, n=4)
    config = TrainConfig(n_components=3, dropout=DropoutConfig.fixed(0.5), iterations=2)
    with pytest.raises(ShapeError):
        train_dropout(X, config, init=FactorPair(np.ones((5, 2)), np.ones((4, 2))))
