import json

import numpy as np
import pytest

from obsrl.model import (ControlAffineModel, DomainWarning, EvaluationError,
                         JacobianBounds, contract_input, example_two_state,
                         linear_model, load_model)

# analytic ranges of the example system's Jacobian entries on [-2,2]^2:
# d f2/d x1 = -1 - 2 x2 sin(2 x1)(cos(2 x1) + 2); |sin t (cos t + 2)| peaks
# at cos t = (sqrt(3) - 1)/2
_S_MAX = np.sqrt(1.0 - ((np.sqrt(3.0) - 1.0) / 2.0) ** 2) * ((np.sqrt(3.0) - 1.0) / 2.0 + 2.0)


def test_bounds_validation():
    with pytest.raises(ValueError):
        JacobianBounds(Mf1=np.ones((2, 2)), Mf2=np.zeros((2, 2)),
                       Mg1=np.zeros((2, 2, 1)), Mg2=np.zeros((2, 2, 1)))


def test_contract_input():
    Mg = np.zeros((2, 2, 2))
    Mg[:, :, 0] = np.eye(2)
    Mg[:, :, 1] = 2.0 * np.eye(2)
    assert np.allclose(contract_input(Mg, np.array([1.0, 3.0])), 7.0 * np.eye(2))


def test_reconstruction_identity(model):
    rng = np.random.default_rng(1)
    b = model.bounds
    for _ in range(50):
        x = rng.uniform(-2, 2, 2)
        u = rng.uniform(-3, 3, 1)
        sh = model.eval_shifted(x, u)
        recon = sh.fbar + b.Mf1 @ x + sh.gbar + contract_input(b.Mg1, u) @ x
        assert np.allclose(recon, model.eval_dynamics(x, u), atol=1e-12)


def test_gbar_zero_at_zero_input(model):
    sh = model.eval_shifted(np.array([1.0, 0.0]), np.zeros(1))
    assert np.allclose(sh.gbar, 0.0)


def test_shifted_jacobians_nonnegative(model):
    # Jacobians of fbar lie in [0, Mf2 - Mf1] by construction of the shift
    rng = np.random.default_rng(2)
    step = model.default_fd_step()
    W = model.bounds.f_width()
    for _ in range(100):
        x = rng.uniform(-2, 2, 2)
        Jf, _ = model.fd_jacobians(x, step)
        Jbar = Jf - model.bounds.Mf1
        assert np.all(Jbar >= -1e-6)
        assert np.all(Jbar <= W + 1e-6)


def test_linear_bounds_exact():
    A = np.array([[-1.0, 0.5], [0.2, -2.0]])
    m = linear_model(A, np.array([[0.0], [1.0]]))
    rep = m.check_jacobian_bounds(samples=100)
    assert abs(rep.worst_violation) <= 1e-9
    assert rep.n_skipped == 0


def test_derived_bounds_contain_samples(model):
    rep = model.check_jacobian_bounds(samples=10000)
    assert rep.ok, f"violation {rep.worst_violation} at {rep.worst_location}"


def test_derived_bounds_match_analysis(model):
    b = model.bounds
    # row 1 of f is linear: [-1, 1] exactly
    assert np.allclose(b.Mf1[0], [-1.0, 1.0], atol=1e-6)
    assert np.allclose(b.Mf2[0], [-1.0, 1.0], atol=1e-6)
    # d f2/d x1 in [-1 - 4 s, -1 + 4 s] with s the trig peak, then 5% margin
    lo, hi = -1.0 - 4.0 * _S_MAX, -1.0 + 4.0 * _S_MAX
    width = hi - lo
    assert b.Mf1[1, 0] == pytest.approx(lo - 0.05 * width, abs=0.05)
    assert b.Mf2[1, 0] == pytest.approx(hi + 0.05 * width, abs=0.05)
    # d f2/d x2 = -0.5 (1 - c^2) with c in [1, 3]: range [0, 4]
    assert b.Mf1[1, 1] == pytest.approx(0.0 - 0.05 * 4.0, abs=0.05)
    assert b.Mf2[1, 1] == pytest.approx(4.0 + 0.05 * 4.0, abs=0.05)
    # d g21/d x1 = -2 sin(2 x1) in [-2, 2]
    assert b.Mg1[1, 0, 0] == pytest.approx(-2.0 - 0.05 * 4.0, abs=0.05)
    assert b.Mg2[1, 0, 0] == pytest.approx(2.0 + 0.05 * 4.0, abs=0.05)


def test_linear_derive_bounds_exact():
    A = np.array([[-1.0, 0.5], [0.2, -2.0]])
    m = ControlAffineModel(n=2, m=1, q=1, f=lambda x: A @ x,
                           g=lambda x: np.array([[0.0], [1.0]]),
                           C=[[1.0, 0.0]], box=[(-2, 2), (-2, 2)])
    b = m.derive_bounds(grid=11)
    # zero-width intervals stay exact through the margin inflation
    assert np.allclose(b.Mf1, A, atol=1e-8)
    assert np.allclose(b.Mf2, A, atol=1e-8)


def test_domain_warning(model):
    with pytest.warns(DomainWarning):
        model.eval_dynamics(np.array([5.0, 0.0]), np.zeros(1))


def test_evaluation_error():
    m = ControlAffineModel(n=1, m=1, q=1,
                           f=lambda x: np.array([np.inf]),
                           g=lambda x: np.array([[0.0]]),
                           C=[[1.0]], box=[(-1, 1)])
    with pytest.raises(EvaluationError):
        m.eval_dynamics(np.zeros(1), np.zeros(1))


def test_load_model_builtin_and_json(tmp_path):
    m = load_model("example2state")
    assert m.name == "example2state" and m.bounds is not None
    doc = {"dynamics": "linear", "A": [[-1.0, 0.0], [0.0, -2.0]],
           "B": [[1.0], [0.0]], "C": [[1.0, 0.0]]}
    path = tmp_path / "model.json"
    path.write_text(json.dumps(doc))
    m2 = load_model(str(path))
    assert m2.n == 2 and m2.m == 1
    assert np.allclose(m2.bounds.Mf1, doc["A"])
    with pytest.raises(ValueError):
        load_model({"dynamics": "nope"})


def test_load_model_explicit_bounds():
    doc = {"dynamics": "example2state",
           "bounds": {"Mf1": [[-1, 1], [-11, -1]], "Mf2": [[-1, 1], [9, 5]],
                      "Mg1": [[[0]], [[-3]]], "Mg2": [[[0]], [[3]]]}}
    m = load_model(doc)
    assert m.bounds.Mf1[1, 0] == -11.0
