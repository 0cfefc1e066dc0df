"""Observer evaluation during simulation.

The estimator propagates the model through its shifted decomposition with
three output-error corrections: a linear term L(y - C xhat) plus nonlinear
injections H and K applied inside the shifted drift and input maps.  The
interface consumes only the measurement y and the input u, never the true
state, so output-feedback purity is structural.
"""

from __future__ import annotations

import numpy as np

from .model import ControlAffineModel, contract_input


def observer_rhs(model: ControlAffineModel, gains, xhat, y, u) -> np.ndarray:
    """Time derivative of the state estimate.

    xhat_dot = Mf1 xhat + (Mg1 u) xhat + fbar(xhat + H(y - C xhat))
               + gbar(xhat + K(y - C xhat), u) + L(y - C xhat)

    Evaluation errors from the injected arguments propagate to the caller;
    the harness treats them as trajectory escape rather than clamping.
    """
    if model.bounds is None:
        raise ValueError("model has no Jacobian bounds")
    xhat = np.asarray(xhat, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    innov = y - model.C @ xhat
    b = model.bounds
    out = b.Mf1 @ xhat + contract_input(b.Mg1, u) @ xhat
    out = out + model.fbar(xhat + gains.H @ innov)
    out = out + model.gbar(xhat + gains.K @ innov, u)
    out = out + gains.L @ innov
    return out


def error_energy(gains, e) -> float:
    """Quadratic estimation-error energy e' P e."""
    e = np.asarray(e, dtype=float)
    return float(e @ gains.P @ e)
