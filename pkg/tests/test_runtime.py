import numpy as np
import pytest

from obsrl.model import contract_input
from obsrl.runtime import error_energy, observer_rhs
from obsrl.synthesis import ObserverGains

REFERENCE_P = np.array([[0.75067, 0.80202], [0.80202, 1.9477]])


def reference_gains():
    return ObserverGains(P=REFERENCE_P,
                         L=np.array([[-18.8704], [10.1087]]),
                         H=np.array([[1.1779], [0.0]]),
                         K=np.zeros((2, 1)), alpha=2.0)


def test_zero_innovation_consistency(model, gains):
    rng = np.random.default_rng(6)
    for _ in range(50):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-3, 3, 1)
        r = observer_rhs(model, gains, x, model.C @ x, u)
        assert np.allclose(r, model.eval_dynamics(x, u), atol=1e-12)


def test_open_loop_propagation(model):
    g0 = ObserverGains(P=np.eye(2), L=np.zeros((2, 1)), H=np.zeros((2, 1)),
                       K=np.zeros((2, 1)), alpha=2.0)
    xhat = np.array([0.5, 0.1])
    u = np.array([1.2])
    r = observer_rhs(model, g0, xhat, np.array([4.0]), u)
    assert np.allclose(r, model.eval_dynamics(xhat, u), atol=1e-12)


def test_term_by_term_oracle(model):
    # independent recomputation of every correction term at the benchmark ICs
    g = reference_gains()
    x = np.array([-1.0, 1.0])
    xhat = np.array([2.0, 1.5])
    u = np.zeros(1)
    y = model.C @ x
    innov = y - model.C @ xhat  # scalar -0.5
    b = model.bounds
    zf = xhat + g.H @ innov
    expect = (b.Mf1 @ xhat + contract_input(b.Mg1, u) @ xhat
              + (model.f(zf) - b.Mf1 @ zf)
              + (model.g(xhat) @ u - contract_input(b.Mg1, u) @ xhat)
              + (g.L @ innov))
    got = observer_rhs(model, g, xhat, y, u)
    assert np.allclose(got, expect, atol=1e-12)
    assert innov[0] == pytest.approx(-0.5)


def test_error_energy_values():
    g = reference_gains()
    assert error_energy(g, np.zeros(2)) == 0.0
    gI = ObserverGains(P=np.eye(2), L=np.zeros((2, 1)), H=np.zeros((2, 1)),
                       K=np.zeros((2, 1)), alpha=1.0)
    assert error_energy(gI, np.array([3.0, 4.0])) == pytest.approx(25.0)
    assert error_energy(g, np.array([1.0, 0.0])) == pytest.approx(0.75067)


def test_error_energy_eigen_bounds():
    g = reference_gains()
    lo, hi = np.linalg.eigvalsh(REFERENCE_P)
    rng = np.random.default_rng(7)
    for _ in range(100):
        e = rng.standard_normal(2)
        v = error_energy(g, e)
        n2 = float(e @ e)
        assert lo * n2 - 1e-12 <= v <= hi * n2 + 1e-12


def test_requires_bounds(gains):
    from obsrl.model import example_two_state
    bare = example_two_state()
    with pytest.raises(ValueError):
        observer_rhs(bare, gains, np.zeros(2), np.zeros(1), np.zeros(1))
