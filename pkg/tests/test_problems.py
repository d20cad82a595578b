from dataclasses import replace

import numpy as np
import pytest

from batch_smp.core import DimensionError, TimeGrid
from batch_smp.problems import example1_spec, example2_spec, gbm_spec, scalar_lq
from batch_smp.problems import example1 as ex1
from batch_smp.problems import example2 as ex2
from batch_smp.problems.hjb import (
    HjbSpec,
    RandomizedNet,
    hjb_forward,
    hjb_noise,
    hjb_reference_value,
    log_quadratic,
    log_quadratic_grad,
    network_gradients,
    nn_adjoint_y,
    nn_forward,
    nn_gradients,
    sample_cost,
    simulate_cost,
    train_hjb,
)
from batch_smp.optim import param_adam_step

# -- coefficient derivatives vs finite differences -------------------------------

SPECS = {
    "example1": example1_spec(),
    "example2": example2_spec(),
    "lq": scalar_lq(a=0.4, B=1.3, s0=0.6, D=0.2, q=0.7, G=1.5, c=-0.3),
    "gbm": gbm_spec(),
}


def _dense(spec, jac, r):
    """Dense ``(d, r)`` view of a Jacobian returned in either layout."""
    jac = np.asarray(jac, dtype=float)
    if spec.diagonal:
        return np.diag(np.broadcast_to(jac, (spec.d,)))
    return np.broadcast_to(jac, (spec.d, r))


def _fd(fn, v, eps=1e-6):
    cols = []
    for j in range(v.size):
        e = np.zeros_like(v)
        e[j] = eps
        cols.append((np.asarray(fn(v + e)) - np.asarray(fn(v - e))) / (2 * eps))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("name", sorted(SPECS))
def test_coefficient_derivatives(name):
    spec = SPECS[name]
    rng = np.random.default_rng(1)
    for _ in range(10):
        t = rng.uniform(0, 1)
        x, u = rng.normal(size=spec.d), rng.normal(size=spec.k)
        np.testing.assert_allclose(_dense(spec, spec.b_x(t, x, u), spec.d), _fd(lambda v: spec.b(t, v, u), x), atol=1e-7)
        np.testing.assert_allclose(_dense(spec, spec.b_u(t, x, u), spec.k), _fd(lambda v: spec.b(t, x, v), u), atol=1e-7)
        np.testing.assert_allclose(np.ravel(spec.f_x(t, x, u)), _fd(lambda v: spec.f(t, v, u), x), atol=1e-6)
        np.testing.assert_allclose(np.ravel(spec.f_u(t, x, u)), _fd(lambda v: spec.f(t, x, v), u), atol=1e-6)
        np.testing.assert_allclose(np.ravel(spec.g_x(x)), _fd(spec.g, x), atol=1e-6)
        sig_u = _fd(lambda v: spec.sigma(t, x, v), u)
        if spec.diagonal:
            np.testing.assert_allclose(np.diag(np.broadcast_to(spec.sigma_u(t, x, u), (spec.d,))), sig_u, atol=1e-7)
        else:
            np.testing.assert_allclose(np.broadcast_to(spec.sigma_u(t, x, u), sig_u.shape), sig_u, atol=1e-7)
        if spec.sigma_x is not None:
            sig_x = _fd(lambda v: spec.sigma(t, v, u), x)
            got = spec.sigma_x(t, x, u)
            if spec.diagonal:
                np.testing.assert_allclose(np.diag(np.broadcast_to(got, (spec.d,))), sig_x, atol=1e-7)
            else:
                np.testing.assert_allclose(np.broadcast_to(got, sig_x.shape), sig_x, atol=1e-7)


# -- Example 2 -------------------------------------------------------------------


def test_example2_exact_control():
    np.testing.assert_allclose(ex2.exact_control(1.0), [0.0, 0.0], atol=1e-15)
    assert ex2.exact_control(0.0)[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ex2.exact_control(1.5)


def test_example2_reference_on_grid():
    g = TimeGrid(1.0, 4)
    ref = example2_spec().reference_control(g)
    np.testing.assert_allclose(ref.values, ex2.exact_control(g.times[:-1]).T)


# -- Example 1 -------------------------------------------------------------------


def test_example1_optimality_system_matches_closed_form():
    p = ex1.Example1Params(x0=0.0)
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(ex1.exact_control(t, p), ex1.closed_form_control(t, p), atol=1e-10)


def test_example1_closed_form_with_given_constants():
    p = ex1.Example1Params()
    u = ex1.closed_form_control(1.0, p, XT=(0.25, 0.5))
    b = p.beta(1.0)
    np.testing.assert_allclose(u, [-0.25 / b, -0.5 / b])
    with pytest.raises(ValueError):
        ex1.closed_form_control(-0.5, p)


def test_example1_reference_data():
    t, u = ex1.load_reference_data()
    assert len(t) == ex1.DATA_N + 1
    np.testing.assert_allclose(u, ex1.exact_control(t).T, atol=1e-12)
    g = TimeGrid(1.0, 40)
    np.testing.assert_allclose(
        ex1.reference_control(g, source="data").values, ex1.reference_control(g, source="exact").values, atol=1e-12
    )
    with pytest.raises(ValueError):
        ex1.reference_control(g, source="table")


def test_example1_reference_data_roundtrip(tmp_path):
    path = tmp_path / "ref.csv"
    ex1.write_reference_data(path, N=8)
    t, u = ex1.load_reference_data(path)
    np.testing.assert_allclose(t, np.linspace(0, 1, 9))
    np.testing.assert_allclose(u, ex1.exact_control(t).T, rtol=0, atol=0)


def test_example1_mean_dynamics_consistent():
    # along the optimum, the mean state solves m' = u - r with m(0) = x0
    p = ex1.Example1Params()
    base, unit, p0 = ex1._optimal_solution(p)
    t = np.linspace(0, 1, 2001)
    m = base(t)[:2] + p0[:, None] * unit(t)[:2]
    integrand = ex1.exact_control(t, p) - p.r(t)
    steps = 0.5 * (integrand[:, 1:] + integrand[:, :-1]) * np.diff(t)
    np.testing.assert_allclose(m[:, -1], p.x0 + steps.sum(axis=1), atol=1e-6)


# -- randomized network ----------------------------------------------------------


def hand_net(A=1.0, b=0.0, At=0.0, bt=0.0, N=1):
    return RandomizedNet(
        A=np.full((N, 1, 1), A), b=np.full((N, 1), b), At=np.full((N, 1, 1), At), bt=np.full((N, 1), bt)
    )


def test_net_forward_cases():
    net = RandomizedNet.init(d=3, N=2, width=5, seed=1)
    np.testing.assert_array_equal(nn_forward(net, 0, np.ones((4, 3))), 0.0)
    np.testing.assert_allclose(nn_forward(hand_net(A=3.0, b=0.7), 0, [[2.0]]), [[0.7]])
    got = nn_forward(hand_net(A=2.0, b=0.5, At=1.0), 0, [0.1])
    assert got[0] == pytest.approx(2 * np.tanh(0.1) + 0.5)
    assert got[0] == pytest.approx(0.699337, abs=5e-6)


def test_net_init_and_params():
    net = RandomizedNet.init(d=4, N=3, width=6, seed=2)
    assert net.A.shape == (3, 4, 6) and net.At.shape == (3, 6, 4)
    with pytest.raises(ValueError):
        net.At[0, 0, 0] = 1.0
    flat = np.arange(net.flat_params().size, dtype=float)
    again = net.with_flat_params(flat)
    np.testing.assert_array_equal(again.flat_params(), flat)
    assert again.At is net.At
    with pytest.raises(DimensionError):
        net.with_flat_params(flat[:-1])
    with pytest.raises(DimensionError):
        RandomizedNet(np.zeros((2, 1, 3)), np.zeros((2, 2)), np.zeros((2, 3, 1)), np.zeros((2, 3)))
    np.testing.assert_array_equal(RandomizedNet.init(4, 3, 6, seed=2).At, net.At)


def test_adjoint_without_control_jacobian():
    spec = HjbSpec(d=3, N=5)
    net = RandomizedNet.init(d=3, N=5, width=4, seed=0)
    X = hjb_forward(spec, net, hjb_noise(spec, 7, 0, 0))
    Y = nn_adjoint_y(spec, net, X)
    np.testing.assert_allclose(Y, np.broadcast_to(spec.g_x(X[:, -1])[:, None], Y.shape))
    rng = np.random.default_rng(0)
    trained = replace(net, A=rng.normal(size=net.A.shape))
    zero_lam = replace(spec, lam=0.0)
    X0 = hjb_forward(zero_lam, trained, hjb_noise(zero_lam, 7, 0, 0))
    np.testing.assert_allclose(X0, X)  # drift vanishes at lam = 0
    assert not np.allclose(nn_adjoint_y(zero_lam, trained, X0), Y)  # the 2u term still acts


def test_nn_gradients_hand_case():
    net = hand_net(A=1.0, b=0.0, At=0.0, bt=np.arctanh(0.5))
    dA, db = nn_gradients(net, 0, [0.0], [1.0], lam=1.0)
    assert dA[0, 0] == pytest.approx(1.5)
    assert db[0] == pytest.approx(3.0)
    zero = hand_net(A=0.0, b=0.0, At=1.0)
    dA, db = nn_gradients(zero, 0, [0.3], [0.0], lam=1.0)
    assert dA[0, 0] == 0.0 and db[0] == 0.0


def test_nn_gradients_match_sample_hamiltonian():
    rng = np.random.default_rng(3)
    d, lam = 4, 2.0
    net = RandomizedNet.init(d=d, N=2, width=6, seed=5)
    net = replace(net, A=rng.normal(size=net.A.shape), b=rng.normal(size=net.b.shape))
    x, y = rng.normal(size=d), rng.normal(size=d)

    def H(flat):
        trial = net.with_flat_params(flat)
        u = nn_forward(trial, 1, x)
        return 2 * np.sqrt(lam) * u @ y + u @ u

    dA, db = nn_gradients(net, 1, x, y, lam)
    fd = _fd(H, net.flat_params(), eps=1e-6)
    nA = net.A[0].size
    fdA = fd[net.A.size // 2 : net.A.size].reshape(dA.shape)
    fdb = fd[net.A.size + d : net.A.size + 2 * d]
    assert np.linalg.norm(dA - fdA) / np.linalg.norm(dA) <= 1e-6
    assert np.linalg.norm(db - fdb) / np.linalg.norm(db) <= 1e-6
    assert np.allclose(fd[:nA], 0.0)


def test_network_gradients_are_cost_derivatives():
    rng = np.random.default_rng(4)
    spec = HjbSpec(d=3, N=4, lam=1.5)
    net = RandomizedNet.init(d=3, N=4, width=5, seed=1)
    net = replace(net, A=0.3 * rng.normal(size=net.A.shape), b=0.3 * rng.normal(size=net.b.shape))
    dW = hjb_noise(spec, 64, 2, 0)

    def cost(flat):
        trial = net.with_flat_params(flat)
        return np.mean(sample_cost(spec, trial, hjb_forward(spec, trial, dW)))

    X = hjb_forward(spec, net, dW)
    gA, gb = network_gradients(spec, net, X, nn_adjoint_y(spec, net, X))
    exact = spec.h * np.concatenate([gA.ravel(), gb.ravel()])
    fd = _fd(cost, net.flat_params(), eps=1e-6)
    assert np.linalg.norm(exact - fd) / np.linalg.norm(fd) <= 1e-4


def test_nn_gradients_shape_check():
    net = RandomizedNet.init(d=2, N=1, width=3)
    with pytest.raises(DimensionError):
        nn_gradients(net, 0, np.zeros((5, 2)), np.zeros((5, 3)), 1.0)
    with pytest.raises(DimensionError):
        nn_forward(net, 0, np.zeros(3))


# -- value function oracle -------------------------------------------------------


def test_reference_value_trivial_costs():
    zero = HjbSpec(d=2, g=lambda x: np.zeros(x.shape[:-1]), g_x=np.zeros_like)
    assert hjb_reference_value(zero, 1000)[0] == 0.0
    for lam in (0.5, 3.0):
        const = HjbSpec(d=2, lam=lam, g=lambda x: np.full(x.shape[:-1], 1.7), g_x=np.zeros_like)
        assert hjb_reference_value(const, 1000)[0] == pytest.approx(1.7, rel=1e-12)


def test_reference_value_small_lambda_limit():
    spec = HjbSpec(d=1, lam=1e-6)
    value, se = hjb_reference_value(spec, 200_000, seed=1)
    w = np.random.default_rng(7).normal(size=200_000)
    plain = log_quadratic(np.sqrt(2.0) * w[:, None])
    assert abs(value - plain.mean()) <= 3 * np.hypot(se, plain.std() / np.sqrt(plain.size))
    limit, _ = hjb_reference_value(replace(spec, lam=0.0), 200_000, seed=1)
    assert value == pytest.approx(limit, abs=1e-5)


def test_reference_value_decreases_in_lambda():
    # with shared samples -(1/lam) log mean exp(-lam g) is nonincreasing in lam
    values = [hjb_reference_value(HjbSpec(d=4, lam=lam), 50_000, seed=3)[0] for lam in (0.5, 1.0, 5.0)]
    assert values[0] > values[1] > values[2]


def test_zero_control_cost_bounds_value():
    spec = HjbSpec(d=3, lam=1.0)
    net = RandomizedNet.init(d=3, N=spec.N, width=8)
    cost, se = simulate_cost(spec, net, 50_000, seed=2)
    ref, ref_se = hjb_reference_value(spec, 50_000, seed=5)
    assert cost >= ref - 3 * np.hypot(se, ref_se)


def test_reference_value_underflow():
    spec = HjbSpec(d=1, lam=1e4, g=lambda x: np.full(x.shape[:-1], 1.0), g_x=np.zeros_like)
    with pytest.raises(FloatingPointError):
        hjb_reference_value(spec, 10)


def test_log_quadratic_gradient():
    x = np.random.default_rng(2).normal(size=(3, 5))
    for row in x:
        np.testing.assert_allclose(log_quadratic_grad(row), _fd(log_quadratic, row), rtol=1e-7)


def test_uncontrolled_cost_matches_oracle():
    spec = HjbSpec(d=3, lam=0.0)
    net = RandomizedNet.init(d=3, N=spec.N, width=4)
    mean, se = simulate_cost(spec, net, 100_000, seed=3)
    ref, ref_se = hjb_reference_value(spec, 100_000, seed=4)
    assert abs(mean - ref) <= 3 * np.hypot(se, ref_se)
    zero = replace(spec, g=lambda x: np.zeros(x.shape[:-1]))
    assert simulate_cost(zero, net, 1000)[0] == 0.0


def test_training_with_no_epochs_evaluates_initial_net():
    spec = HjbSpec(d=3, N=5)
    net = RandomizedNet.init(d=3, N=5, width=8)
    res = train_hjb(spec, net, param_adam_step, 1e-2, epochs=0, eval_samples=4096, eval_seed=9)
    assert res.epochs == []
    assert (res.value, res.value_stderr) == simulate_cost(spec, net, 4096, seed=9)


def test_training_lowers_cost():
    spec = HjbSpec(d=4, N=5, lam=1.0)
    net = RandomizedNet.init(d=4, N=5, width=16, seed=3)
    res = train_hjb(spec, net, param_adam_step, 2e-2, epochs=100, batch=256, eval_samples=1 << 15)
    before, se = simulate_cost(spec, net, 1 << 15, seed=1_000_003)
    assert res.value < before - 3 * se
    assert res.net.At is net.At
    assert hash(res.net.At.tobytes() + res.net.bt.tobytes()) == hash(net.At.tobytes() + net.bt.tobytes())
