"""Shared test helpers."""

import numpy as np

from obsrl import sim
from obsrl.critic import CostSpec, LearnerGains, monomial_basis
from obsrl.model import ControlAffineModel, JacobianBounds
from obsrl.synthesis import ObserverGains


def scalar_model():
    """xdot = -x with no input authority, for closed-form checks."""
    b = JacobianBounds(Mf1=[[-1.0]], Mf2=[[-1.0]],
                       Mg1=np.zeros((1, 1, 1)), Mg2=np.zeros((1, 1, 1)))
    return ControlAffineModel(n=1, m=1, q=1,
                              f=lambda x: -x, g=lambda x: np.zeros((1, 1)),
                              C=[[1.0]], box=[(-2.0, 2.0)], bounds=b,
                              name="scalar")


def scalar_config(h, T, f=None, x0=1.0):
    model = scalar_model()
    if f is not None:
        model = ControlAffineModel(n=1, m=1, q=1, f=f, g=model.g, C=model.C,
                                   box=model.box, bounds=model.bounds,
                                   name="scalar")
    gains = ObserverGains(P=np.eye(1), L=np.zeros((1, 1)),
                          H=np.zeros((1, 1)), K=np.zeros((1, 1)), alpha=1.0)
    return sim.SimConfig(model=model, gains=gains,
                         cost=CostSpec(Qm=[[1.0]], r=[1.0], lambda_bar=3.0),
                         basis=monomial_basis([2], 1),
                         learner=LearnerGains(),
                         x0=[x0], xhat0=[x0], Wc0=[0.0], Gamma0=[[1.0]],
                         extrap_box=[(-1.0, 1.0)], extrap_per_axis=5,
                         h=h, T=T)
