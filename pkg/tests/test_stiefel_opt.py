import json

import numpy as np
import pytest

from choibingham.channel_reps import feasibility
from choibingham.errors import ConfigError, StepTooLargeError
from choibingham.frame_bingham import sample_uniform
from choibingham.stiefel_opt import (
    Direction, Objective, OptimizerOptions, cayley_dense, cayley_derivative, cayley_retract,
    directional_derivative, line_search, minimize, random_tangent, search_direction,
    stochastic_minimize,
)


def rand_complex(shape, rng):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def quadratic(xi0):
    # F = -Re Tr(xi^H A xi) with A = xi0 xi0^H; minimum -N on span(xi0)
    a = xi0 @ xi0.conj().T
    return Objective(lambda x: -float(np.trace(x.conj().T @ a @ x).real), lambda x: -2.0 * a @ x)


def distance_objective(target):
    return Objective(lambda x: float(np.linalg.norm(x - target) ** 2), lambda x: 2.0 * (x - target))


def recording(obj, log):
    def value(x):
        log.append(feasibility(x))
        return obj.value(x)
    return Objective(value, obj.gradient)


# ---------------------------------------------------------------- direction

def test_direction_dense_and_skew():
    rng = np.random.default_rng(0)
    xi = sample_uniform(2, 3, rng)
    g = rand_complex(xi.shape, rng)
    w = search_direction(xi, g).dense()
    assert np.abs(w - (g @ xi.conj().T - xi @ g.conj().T)).max() < 1e-12
    assert np.array_equal(w.conj().T, -w)


def test_direction_g_equals_xi():
    rng = np.random.default_rng(1)
    xi = sample_uniform(2, 4, rng)
    w = search_direction(xi, xi).dense()
    assert np.abs(w).max() < 1e-15
    perp = np.linalg.qr(xi, mode="complete")[0][:, 2:]
    assert np.abs(w @ perp).max() < 1e-15


def test_direction_zero_gradient():
    xi = sample_uniform(2, 2, 2)
    d = search_direction(xi, np.zeros_like(xi))
    assert np.array_equal(d.dense(), np.zeros((4, 4)))
    assert d.norm() == 0.0


def test_direction_norm_matches_frobenius():
    rng = np.random.default_rng(3)
    xi = sample_uniform(3, 2, rng)
    d = search_direction(xi, rand_complex(xi.shape, rng))
    assert np.isclose(d.norm(), np.linalg.norm(d.dense()))


# ---------------------------------------------------------------- Cayley

def test_cayley_zero_step():
    rng = np.random.default_rng(4)
    xi = sample_uniform(2, 4, rng)
    d = search_direction(xi, rand_complex(xi.shape, rng))
    assert np.array_equal(cayley_retract(xi, d, 0.0), xi)


@pytest.mark.parametrize("tau", [1e-3, 1e-1, 1.0])
def test_cayley_feasible(tau):
    rng = np.random.default_rng(5)
    for _ in range(10):
        xi = sample_uniform(2, 4, rng)
        d = search_direction(xi, rand_complex(xi.shape, rng))
        assert feasibility(cayley_retract(xi, d, tau)) < 1e-10


@pytest.mark.parametrize("n,k", [(2, 1), (2, 4), (3, 3), (4, 4), (2, 8)])
def test_cayley_low_rank_matches_dense(n, k):
    rng = np.random.default_rng(6 + n + k)
    xi = np.linalg.qr(rand_complex((n * k, n), rng))[0]
    d = search_direction(xi, rand_complex(xi.shape, rng))
    for tau in (1e-2, 0.3, 2.0):
        assert np.abs(cayley_retract(xi, d, tau) - cayley_dense(xi, d.dense(), tau)).max() < 1e-10


def test_cayley_singular_system_raises():
    xi = np.eye(2, 1, dtype=complex)
    # W = U V^H with V^H U = [[0, 0], [0, -2]]: I + tau/2 V^H U is singular at tau = 1
    u = np.array([[1.0], [0.0]], dtype=complex)
    d = Direction(np.hstack([u, u]), np.hstack([np.zeros((2, 1)), -2 * u]))
    with pytest.raises(StepTooLargeError):
        cayley_retract(xi, d, 1.0)


def test_cayley_derivative_matches_finite_difference():
    rng = np.random.default_rng(7)
    xi = sample_uniform(2, 3, rng)
    d = search_direction(xi, rand_complex(xi.shape, rng))
    w = d.dense()
    h = 1e-6
    for tau in (0.0, 0.2, 0.7):
        fd = (cayley_dense(xi, w, tau + h) - cayley_dense(xi, w, tau - h)) / (2 * h)
        assert np.abs(cayley_derivative(xi, d, tau) - fd).max() < 1e-7


def test_gradient_contract_twenty_cases():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(2, 4))
        # k = 1 is the unitary group, where the quadratic objective is constant
        k = int(rng.integers(2, n * n + 1))
        xi = sample_uniform(n, k, rng)
        obj = quadratic(sample_uniform(n, k, rng))
        d = search_direction(xi, obj.gradient(xi))
        analytic = directional_derivative(obj.gradient(xi), cayley_derivative(xi, d, 0.0))
        assert np.isclose(analytic, -0.5 * d.norm() ** 2, rtol=1e-12)
        h = 1e-5
        fd = (obj.value(cayley_retract(xi, d, h)) - obj.value(cayley_dense(xi, d.dense(), -h))) / (2 * h)
        assert abs(analytic - fd) <= 1e-5 * abs(fd)


# ---------------------------------------------------------------- line search

def test_line_search_armijo_and_descent():
    rng = np.random.default_rng(9)
    xi = sample_uniform(2, 4, rng)
    obj = quadratic(sample_uniform(2, 4, rng))
    opts = OptimizerOptions()
    f0 = obj.value(xi)
    d = search_direction(xi, obj.gradient(xi))
    df0 = -0.5 * d.norm() ** 2
    trial = line_search(obj, xi, d, opts)
    assert trial.value < f0
    assert f0 - trial.value >= opts.armijo_c1 * trial.tau * abs(df0)
    dfy = directional_derivative(trial.grad, cayley_derivative(xi, d, trial.tau))
    assert dfy >= opts.wolfe_c2 * df0


# ---------------------------------------------------------------- minimize

def test_minimize_quadratic_reaches_minimum_feasibly():
    rng = np.random.default_rng(10)
    xi0 = sample_uniform(2, 4, rng)
    log = []
    rep = minimize(recording(quadratic(sample_uniform(2, 4, rng)), log), xi0)
    assert rep.converged
    assert abs(rep.value + 2.0) < 1e-10
    assert max(log) <= 1e-8
    assert rep.feasibility_max <= 1e-8
    assert all(b <= a + 1e-12 for a, b in zip(rep.values, rep.values[1:]))


def test_minimize_distance_objective_finds_target():
    rng = np.random.default_rng(11)
    target = sample_uniform(2, 3, rng)
    d = search_direction(target, rand_complex(target.shape, rng))
    start = cayley_retract(target, d, 0.05)
    rep = minimize(distance_objective(target), start)
    assert rep.value < 1e-8


def test_minimize_constant_objective_exits_immediately():
    xi = sample_uniform(2, 2, 12)
    rep = minimize(Objective(lambda x: 1.0, lambda x: np.zeros_like(x)), xi)
    assert rep.iterations == 0 and rep.converged
    assert rep.evaluations == 1


def test_minimize_requires_gradient():
    with pytest.raises(ConfigError):
        minimize(Objective(lambda x: 0.0), sample_uniform(2, 2, 0))


def test_report_json_fields():
    rng = np.random.default_rng(13)
    rep = minimize(quadratic(sample_uniform(2, 2, rng)), sample_uniform(2, 2, rng))
    data = json.loads(rep.to_json())
    for key in ("iterations", "final_value", "converged", "feasibility_max"):
        assert key in data


def test_options_validation():
    with pytest.raises(ConfigError):
        OptimizerOptions(armijo_c1=0.9, wolfe_c2=0.5)
    with pytest.raises(ConfigError):
        OptimizerOptions(shrink=1.0)
    with pytest.raises(ConfigError):
        OptimizerOptions(restarts=0)


# ---------------------------------------------------------------- random tangent and stochastic mode

def test_random_tangent_is_tangent():
    rng = np.random.default_rng(14)
    xi = sample_uniform(2, 4, rng)
    z = random_tangent(xi, rng)
    assert np.abs(xi.conj().T @ z + z.conj().T @ xi).max() < 1e-12


def test_random_tangent_mean_zero():
    rng = np.random.default_rng(15)
    xi = sample_uniform(2, 3, rng)
    zs = np.array([random_tangent(xi, rng) for _ in range(1000)])
    se = zs.std(axis=0) / np.sqrt(len(zs))
    assert (np.abs(zs.mean(axis=0)) < 4 * se + 1e-12).all()


def test_random_tangent_retract_feasible():
    rng = np.random.default_rng(16)
    xi = sample_uniform(3, 4, rng)
    d = search_direction(xi, random_tangent(xi, rng))
    for tau in (1e-3, 0.5, 3.0):
        assert feasibility(cayley_retract(xi, d, tau)) < 1e-10


def test_stochastic_matches_gradient_run():
    rng = np.random.default_rng(17)
    obj = quadratic(sample_uniform(2, 2, rng))
    xi0 = sample_uniform(2, 2, rng)
    ref = minimize(obj, xi0)
    log = []
    rep = stochastic_minimize(recording(Objective(obj.value), log), xi0,
                              OptimizerOptions(max_iters=3000), rng=18)
    assert abs(rep.value - ref.value) < 1e-3
    assert max(rep.feasibility) < 1e-10
    assert all(b <= a for a, b in zip(rep.values, rep.values[1:]))


def test_stochastic_constant_objective_stops_by_patience():
    rep = stochastic_minimize(Objective(lambda x: 0.0), sample_uniform(2, 2, 19),
                              OptimizerOptions(patience=7), rng=0)
    assert rep.iterations == 7
    assert "patience" in rep.message
