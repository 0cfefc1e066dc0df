"""Critic-only value-function learner with a saturated policy.

Approximates the value function as Wc' sigma(x) over a user-chosen feature
basis, derives the bounded policy u = -lambda_bar * tanh(.), and updates the
weights with normalized least squares driven by Bellman-error residuals
evaluated at the current estimate and at a fixed grid of extrapolation
points.  A persistence-of-excitation metric over the same residual
regressors is exposed for monitoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class PenaltyDomainError(ValueError):
    """Input magnitude exceeds the saturation level lambda_bar."""


class GainCorruptionError(RuntimeError):
    """Least-squares gain matrix lost positive definiteness."""


@dataclass
class CostSpec:
    """Running cost Q(x) + U(u) with saturation-aware input penalty."""

    Qm: np.ndarray  # state weight matrix, PD
    r: np.ndarray  # diagonal input weights, positive, length m
    lambda_bar: float = 3.0

    def __post_init__(self):
        self.Qm = np.asarray(self.Qm, dtype=float)
        self.r = np.atleast_1d(np.asarray(self.r, dtype=float))
        if self.lambda_bar <= 0:
            raise ValueError("lambda_bar must be positive")
        if np.any(self.r <= 0):
            raise ValueError("input weights must be positive")
        if np.any(np.linalg.eigvalsh(0.5 * (self.Qm + self.Qm.T)) <= 0):
            raise ValueError("state weight matrix must be positive definite")

    def state_cost(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Qm @ x)


@dataclass
class BasisSpec:
    """Feature vector sigma with analytic gradient; sigma(0)=0, grad(0)=0."""

    n_features: int
    sigma: callable  # R^n -> R^L
    grad_sigma: callable  # R^n -> (L, n)
    name: str = ""


def quadratic_2d_basis() -> BasisSpec:
    """Features [x1^2, x1 x2, x2^2] on R^2."""

    def sigma(x):
        return np.array([x[0] * x[0], x[0] * x[1], x[1] * x[1]])

    def grad(x):
        return np.array([[2.0 * x[0], 0.0],
                         [x[1], x[0]],
                         [0.0, 2.0 * x[1]]])

    return BasisSpec(n_features=3, sigma=sigma, grad_sigma=grad, name="quadratic2d")


def monomial_basis(degree_set, n: int) -> BasisSpec:
    """All monomials of total degree in degree_set over R^n.

    Degrees 0 and 1 are rejected so the value features vanish (with zero
    gradient) at the origin.
    """
    degree_set = sorted(set(int(d) for d in degree_set))
    if any(d < 2 for d in degree_set):
        raise ValueError("monomial degrees must be >= 2")

    def exponents(total, nvars):
        if nvars == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in exponents(total - first, nvars - 1):
                yield (first,) + rest

    exps = []
    for d in degree_set:
        exps.extend(exponents(d, n))
    exps = np.array(exps, dtype=float)  # (L, n)
    L = exps.shape[0]

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return np.prod(np.power(x[None, :], exps), axis=1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros((L, n))
        for j in range(n):
            de = exps.copy()
            coef = de[:, j].copy()
            de[:, j] = np.maximum(de[:, j] - 1.0, 0.0)
            out[:, j] = coef * np.prod(np.power(x[None, :], de), axis=1)
        return out

    name = "monomials(" + ",".join(str(d) for d in degree_set) + ")"
    return BasisSpec(n_features=L, sigma=sigma, grad_sigma=grad, name=name)


def load_basis(spec) -> BasisSpec:
    """Basis from a config name: "quadratic2d" or "monomials(d1,d2,...)"."""
    if isinstance(spec, BasisSpec):
        return spec
    if isinstance(spec, dict):
        name = spec["name"]
        n = int(spec.get("n", 2))
    else:
        name = str(spec)
        n = 2
    name = name.strip()
    if name == "quadratic2d":
        return quadratic_2d_basis()
    if name.startswith("monomials(") and name.endswith(")"):
        degrees = [int(tok) for tok in name[len("monomials("):-1].split(",") if tok.strip()]
        return monomial_basis(degrees, n)
    raise ValueError(f"unknown basis spec: {name!r}")


@dataclass
class LearnerGains:
    kc: float = 0.01  # adaptation gain
    gamma_norm: float = 0.7  # Bellman-error normalization weight
    beta: float = 0.2  # forgetting factor

    def __post_init__(self):
        if self.kc <= 0 or self.gamma_norm <= 0 or self.beta <= 0:
            raise ValueError("learner gains must be strictly positive")


@dataclass
class CriticState:
    Wc: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        self.Wc = np.asarray(self.Wc, dtype=float)
        self.Gamma = np.asarray(self.Gamma, dtype=float)
        if np.max(np.abs(self.Gamma - self.Gamma.T), initial=0.0) > 1e-10:
            raise ValueError("Gamma must be symmetric")


def policy(model, basis: BasisSpec, cost: CostSpec, xeval, Wc) -> np.ndarray:
    """Saturated policy -lambda_bar * tanh((1/2 lambda_bar) R^-1 g' grad_sigma' Wc)."""
    xeval = np.asarray(xeval, dtype=float)
    Wc = np.asarray(Wc, dtype=float)
    G = model.g(xeval)
    D = (G.T @ (basis.grad_sigma(xeval).T @ Wc)) / (2.0 * cost.lambda_bar * cost.r)
    return -cost.lambda_bar * np.tanh(D)


def control_penalty(cost: CostSpec, u) -> float:
    """Saturation-aware input penalty.

    Per component: 2 r lb u artanh(u/lb) + r lb^2 ln(1 - u^2/lb^2), the
    closed form of 2 r lb * integral of artanh(v/lb) dv from 0 to u.  At
    |u| = lb the limit value 2 r lb^2 ln 2 is returned exactly.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lb = cost.lambda_bar
    if np.any(np.abs(u) > lb):
        raise PenaltyDomainError(f"|u| exceeds saturation level {lb}")
    total = 0.0
    for uk, rk in zip(u, cost.r):
        a = abs(uk)
        if a == lb:
            total += 2.0 * rk * lb * lb * np.log(2.0)
        else:
            s = uk / lb
            total += 2.0 * rk * lb * uk * np.arctanh(s) + rk * lb * lb * np.log1p(-s * s)
    return float(total)


def bellman_error(model, basis: BasisSpec, cost: CostSpec, gains: LearnerGains,
                  xeval, Wc):
    """Residual of the approximate Hamilton-Jacobi-Bellman equation.

    Returns (delta, omega, rho) with omega = grad_sigma (f + g u) the
    regressor and rho = 1 + gamma_norm * omega' omega the normalizer.
    """
    xeval = np.asarray(xeval, dtype=float)
    Wc = np.asarray(Wc, dtype=float)
    u = policy(model, basis, cost, xeval, Wc)
    omega = basis.grad_sigma(xeval) @ (model.f(xeval) + model.g(xeval) @ u)
    delta = float(Wc @ omega) + control_penalty(cost, u) + cost.state_cost(xeval)
    rho = 1.0 + gains.gamma_norm * float(omega @ omega)
    return delta, omega, rho


def critic_derivatives_arrays(Gamma, gains: LearnerGains, delta, omega, rho):
    """Vectorized core of critic_derivatives over stacked sample arrays.

    delta: (N,), omega: (N, L), rho: (N,).  Gamma is assumed PD; callers on
    the hot path check that once per step rather than per stage.
    """
    N = delta.shape[0]
    wn = omega / rho[:, None]
    s1 = omega.T @ (delta / rho)
    s2 = wn.T @ wn
    wc_dot = -(gains.kc / N) * (Gamma @ s1)
    gamma_dot = gains.beta * Gamma - (gains.kc / N) * (Gamma @ s2 @ Gamma)
    return wc_dot, 0.5 * (gamma_dot + gamma_dot.T)


def critic_derivatives(state: CriticState, gains: LearnerGains, be_samples):
    """Continuous-time update laws for (Wc, Gamma) from Bellman-error samples.

    WcDot = -(kc/N) Gamma sum_i omega_i delta_i / rho_i
    GammaDot = beta Gamma - (kc/N) Gamma (sum_i omega_i omega_i'/rho_i^2) Gamma
    """
    N = len(be_samples)
    if N < 1:
        raise ValueError("need at least one Bellman-error sample")
    eigs = np.linalg.eigvalsh(0.5 * (state.Gamma + state.Gamma.T))
    if eigs[0] <= 0.0:
        raise GainCorruptionError(f"least-squares gain not PD (min eig {eigs[0]:.3e})")
    L = state.Wc.size
    s1 = np.zeros(L)
    s2 = np.zeros((L, L))
    for delta, omega, rho in be_samples:
        s1 += omega * (delta / rho)
        s2 += np.outer(omega, omega) / (rho * rho)
    wc_dot = -(gains.kc / N) * (state.Gamma @ s1)
    gamma_dot = gains.beta * state.Gamma - (gains.kc / N) * (state.Gamma @ s2 @ state.Gamma)
    return wc_dot, 0.5 * (gamma_dot + gamma_dot.T)


def pe_metric_arrays(omega, rho) -> float:
    """Vectorized pe_metric over stacked sample arrays."""
    wn = omega / rho[:, None]
    return float(np.linalg.eigvalsh(wn.T @ wn / rho.shape[0])[0])


def pe_metric(be_samples) -> float:
    """lambda_min of the normalized regressor Gram matrix (1/N) sum omega omega'/rho^2."""
    N = len(be_samples)
    if N < 1:
        raise ValueError("need at least one Bellman-error sample")
    L = be_samples[0][1].size
    G = np.zeros((L, L))
    for _, omega, rho in be_samples:
        G += np.outer(omega, omega) / (rho * rho)
    return float(np.linalg.eigvalsh(G / N)[0])


class ExtrapolationSet:
    """Fixed grid of Bellman-error extrapolation points with precomputed data.

    The dynamics and basis values at the grid never change, so they are
    evaluated once; per call only the weight-dependent pieces are formed,
    vectorized over all points.
    """

    def __init__(self, model, basis: BasisSpec, cost: CostSpec, points):
        self.points = np.asarray(points, dtype=float)
        N = self.points.shape[0]
        if N < 1:
            raise ValueError("need at least one extrapolation point")
        self.basis = basis
        self.cost = cost
        self.f = np.array([model.f(p) for p in self.points])  # (N, n)
        self.g = np.array([model.g(p) for p in self.points])  # (N, n, m)
        self.grads = np.array([basis.grad_sigma(p) for p in self.points])  # (N, L, n)
        self.q = np.array([cost.state_cost(p) for p in self.points])  # (N,)

    @classmethod
    def uniform_grid(cls, model, basis, cost, box, per_axis: int):
        """Uniform per_axis^n grid over the axis-aligned box [(lo, hi), ...]."""
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(model, basis, cost, pts)

    def __len__(self):
        return self.points.shape[0]

    def batch(self, gains: LearnerGains, Wc):
        """(delta_i, omega_i, rho_i) at every grid point for the given weights."""
        delta, omega, rho = self.batch_arrays(gains, Wc)
        return list(zip(delta, omega, rho))

    def batch_arrays(self, gains: LearnerGains, Wc):
        """Stacked (delta (N,), omega (N, L), rho (N,)) for the given weights."""
        Wc = np.asarray(Wc, dtype=float)
        lb = self.cost.lambda_bar
        # D_i = (1/2 lb) R^-1 g_i' grad_i' Wc, shape (N, m)
        gw = np.einsum("nlk,l->nk", self.grads, Wc)  # (N, n) of grad' Wc
        D = np.einsum("nkm,nk->nm", self.g, gw) / (2.0 * lb * self.cost.r[None, :])
        u = -lb * np.tanh(D)  # (N, m)
        drift = self.f + np.einsum("nkm,nm->nk", self.g, u)  # (N, n)
        omega = np.einsum("nlk,nk->nl", self.grads, drift)  # (N, L)
        rho = 1.0 + gains.gamma_norm * np.einsum("nl,nl->n", omega, omega)
        s = np.clip(u / lb, -1.0, 1.0)
        pen = np.sum(2.0 * self.cost.r[None, :] * lb * u * np.arctanh(s)
                     + self.cost.r[None, :] * lb * lb * np.log1p(-s * s), axis=1)
        delta = omega @ Wc + pen + self.q
        return delta, omega, rho
