import numpy as np
import pytest
from scipy.integrate import quad

from obsrl.critic import (BasisSpec, CostSpec, CriticState, ExtrapolationSet,
                          GainCorruptionError, LearnerGains,
                          PenaltyDomainError, bellman_error, control_penalty,
                          critic_derivatives, load_basis, monomial_basis,
                          pe_metric, policy, quadratic_2d_basis)


@pytest.fixture
def cost():
    return CostSpec(Qm=5.0 * np.eye(2), r=[1.0], lambda_bar=3.0)


@pytest.fixture
def basis():
    return quadratic_2d_basis()


@pytest.fixture
def learner():
    return LearnerGains(kc=0.01, gamma_norm=0.7, beta=0.2)


def test_cost_validation():
    with pytest.raises(ValueError):
        CostSpec(Qm=np.eye(2), r=[1.0], lambda_bar=-1.0)
    with pytest.raises(ValueError):
        CostSpec(Qm=np.eye(2), r=[0.0], lambda_bar=3.0)
    with pytest.raises(ValueError):
        CostSpec(Qm=-np.eye(2), r=[1.0], lambda_bar=3.0)


def test_penalty_quadrature_oracle(cost):
    # closed form vs adaptive quadrature of 2 r lb artanh(v/lb)
    for uval in np.linspace(-2.99, 2.99, 100):
        closed = control_penalty(cost, [uval])
        numeric, _ = quad(lambda v: 2.0 * 3.0 * np.arctanh(v / 3.0), 0.0, uval)
        assert closed == pytest.approx(numeric, rel=1e-8, abs=1e-12)


def test_penalty_boundary_and_domain(cost):
    assert control_penalty(cost, [3.0]) == pytest.approx(18.0 * np.log(2.0), abs=1e-9)
    assert control_penalty(cost, [-3.0]) == pytest.approx(18.0 * np.log(2.0), abs=1e-9)
    assert control_penalty(cost, [0.0]) == 0.0
    with pytest.raises(PenaltyDomainError):
        control_penalty(cost, [3.0001])


def test_penalty_positive(cost):
    rng = np.random.default_rng(8)
    for _ in range(200):
        u = rng.uniform(-3, 3, 1)
        v = control_penalty(cost, u)
        assert v >= 0.0
        if abs(u[0]) > 1e-8:
            assert v > 0.0


def test_policy_trivial_cases(model, basis, cost):
    assert np.allclose(policy(model, basis, cost, [1.0, 1.0], np.zeros(3)), 0.0)
    assert np.allclose(policy(model, basis, cost, [0.0, 0.0], [0.4, 0.2, 0.8]), 0.0)


def test_policy_hand_expansion(model, basis, cost):
    Wc = np.array([0.4, 0.2, 0.8])
    x = np.array([1.0, 1.0])
    grad = np.array([[2.0, 0.0], [1.0, 1.0], [0.0, 2.0]])
    gvec = np.array([0.0, np.cos(2.0) + 2.0])
    D = float(gvec @ (grad.T @ Wc)) / (2.0 * 3.0)
    u = policy(model, basis, cost, x, Wc)
    assert u[0] == pytest.approx(-3.0 * np.tanh(D), abs=1e-12)
    assert abs(u[0]) < 3.0


def test_policy_saturates(model, basis, cost):
    rng = np.random.default_rng(9)
    for _ in range(200):
        x = rng.uniform(-2, 2, 2)
        Wc = rng.standard_normal(3)
        assert np.max(np.abs(policy(model, basis, cost, x, Wc))) < 3.0
    # extreme weights: float tanh rounds to exactly 1, never beyond
    u = policy(model, basis, cost, [2.0, 2.0], np.array([1e9, 1e9, 1e9]))
    assert np.max(np.abs(u)) <= 3.0


def test_bellman_error_trivial(model, basis, cost, learner):
    d, om, rho = bellman_error(model, basis, cost, learner, [0.0, 0.0], [0.4, 0.2, 0.8])
    assert d == 0.0 and rho == 1.0 and np.allclose(om, 0.0)
    x = np.array([0.7, -0.3])
    d, om, rho = bellman_error(model, basis, cost, learner, x, np.zeros(3))
    assert d == pytest.approx(cost.state_cost(x))
    assert np.allclose(om, basis.grad_sigma(x) @ model.f(x))


def test_bellman_error_term_by_term(model, basis, cost, learner):
    Wc = np.array([0.4, 0.2, 0.8])
    x = np.array([0.5, -0.5])
    u = policy(model, basis, cost, x, Wc)
    drift = model.f(x) + model.g(x) @ u
    omega = basis.grad_sigma(x) @ drift
    expect = float(Wc @ omega) + control_penalty(cost, u) + float(x @ (5.0 * np.eye(2)) @ x)
    d, om, rho = bellman_error(model, basis, cost, learner, x, Wc)
    assert d == pytest.approx(expect, abs=1e-12)
    assert rho == pytest.approx(1.0 + 0.7 * float(omega @ omega))


def test_critic_derivatives_hand_cases():
    st = CriticState(Wc=np.zeros(3), Gamma=np.eye(3))
    lg = LearnerGains(kc=1.0, gamma_norm=1e-9, beta=1e-9)
    wd, gd = critic_derivatives(st, lg, [(2.0, np.array([1.0, 0, 0]), 1.0)])
    assert np.allclose(wd, [-2.0, 0.0, 0.0])
    assert gd[0, 0] == pytest.approx(-1.0, abs=1e-6)
    # zero residuals: no weight motion
    wd, _ = critic_derivatives(st, lg, [(0.0, np.array([1.0, 2, 3]), 2.0)])
    assert np.allclose(wd, 0.0)
    # zero regressor: pure forgetting growth
    lg2 = LearnerGains(kc=1.0, gamma_norm=1.0, beta=0.2)
    _, gd = critic_derivatives(st, lg2, [(1.0, np.zeros(3), 1.0)])
    assert np.allclose(gd, 0.2 * np.eye(3))


def test_critic_derivatives_gamma_guard():
    st = CriticState(Wc=np.zeros(2), Gamma=np.zeros((2, 2)))
    lg = LearnerGains(kc=1.0, gamma_norm=1.0, beta=0.2)
    with pytest.raises(GainCorruptionError):
        critic_derivatives(st, lg, [(1.0, np.ones(2), 1.0)])


def test_pe_metric_rank_cases():
    w = np.array([1.0, 1.0, 0.0])
    assert pe_metric([(0.0, w, 1.0)] * 5) == pytest.approx(0.0, abs=1e-12)
    samples = [(0.0, e, 1.0) for e in np.eye(3)]
    assert pe_metric(samples) == pytest.approx(1.0 / 3.0)


def test_summand_boundedness(model, basis, cost, learner):
    # the normalization bounds each omega omega'/rho^2 summand by 1/(4 gamma)
    rng = np.random.default_rng(10)
    cap = 1.0 / (4.0 * learner.gamma_norm)
    for _ in range(200):
        x = rng.uniform(-2, 2, 2)
        Wc = rng.standard_normal(3)
        _, om, rho = bellman_error(model, basis, cost, learner, x, Wc)
        top = float(np.max(np.linalg.eigvalsh(np.outer(om, om) / rho ** 2)))
        assert top <= cap + 1e-12


def test_gradient_fidelity_both_bases():
    rng = np.random.default_rng(11)
    for b in (quadratic_2d_basis(), monomial_basis([2, 3], 2)):
        worst = 0.0
        for _ in range(1000):
            x = rng.uniform(-2, 2, 2)
            ga = b.grad_sigma(x)
            h = 1e-6
            gf = np.zeros_like(ga)
            for j in range(2):
                dp, dm = x.copy(), x.copy()
                dp[j] += h
                dm[j] -= h
                gf[:, j] = (b.sigma(dp) - b.sigma(dm)) / (2.0 * h)
            denom = max(1.0, float(np.max(np.abs(ga))))
            worst = max(worst, float(np.max(np.abs(ga - gf))) / denom)
        assert worst <= 1e-6, f"{b.name}: {worst}"


def test_basis_vanishes_at_origin():
    for b in (quadratic_2d_basis(), monomial_basis([2, 4], 2)):
        assert np.allclose(b.sigma(np.zeros(2)), 0.0)
        assert np.allclose(b.grad_sigma(np.zeros(2)), 0.0)


def test_monomial_degree_guard():
    with pytest.raises(ValueError):
        monomial_basis([1, 2], 2)


def test_load_basis():
    assert load_basis("quadratic2d").n_features == 3
    b = load_basis({"name": "monomials(2,3)", "n": 2})
    assert b.n_features == 3 + 4  # quadratics plus cubics in two variables
    with pytest.raises(ValueError):
        load_basis("fourier")


def test_extrapolation_batch_matches_scalar(model, basis, cost, learner):
    es = ExtrapolationSet.uniform_grid(model, basis, cost,
                                       [(-1, 1), (-1, 1)], 10)
    assert len(es) == 100
    Wc = np.array([0.4, 0.2, 0.8])
    batch = es.batch(learner, Wc)
    for p, (d_b, om_b, rho_b) in zip(es.points, batch):
        d_s, om_s, rho_s = bellman_error(model, basis, cost, learner, p, Wc)
        assert d_b == pytest.approx(d_s, abs=1e-12)
        assert np.allclose(om_b, om_s, atol=1e-12)
        assert rho_b == pytest.approx(rho_s, abs=1e-12)
