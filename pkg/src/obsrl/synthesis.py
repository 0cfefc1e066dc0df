"""Observer gain synthesis via sector multipliers and semidefinite feasibility.

Assembles the 2n x 2n matrix inequality that certifies exponential decay of
the estimation error, solves it with the in-repo SDP engine (in the
convexified variables P, R_lmi = P L, H, K), recovers L = P^-1 R_lmi, and
provides sampling-based verifiers for the sector conditions and the decay
inequality.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .model import ControlAffineModel, EvaluationError, JacobianBounds, contract_input
from .sdp import NSD, PD, AffineMatrixConstraint, SdpCertificate, eval_constraint, solve_feasibility


class SynthesisError(RuntimeError):
    """Feasibility search failed; carries best-found margins."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ConditioningError(RuntimeError):
    """Recovered P is too ill-conditioned to invert reliably."""


@dataclass(frozen=True)
class MultiplierPair:
    """Sector multiplier matrices for the drift (Jf) and input term (Jg at a given u)."""

    Jf: np.ndarray  # (2n, 2n)
    Jg: np.ndarray  # (2n, 2n)


def build_multipliers(bounds: JacobianBounds, u) -> MultiplierPair:
    """Block multipliers: zero (1,1) block, identity (2,2) block, and
    -half the sector width in the off-diagonal blocks."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != bounds.m:
        raise ValueError(f"input dimension {u.size} does not match bounds ({bounds.m})")
    n = bounds.n
    Wf = bounds.f_width()
    Wg = contract_input(bounds.g_width(), u)  # signed with u
    Jf = np.zeros((2 * n, 2 * n))
    Jg = np.zeros((2 * n, 2 * n))
    Jf[n:, n:] = np.eye(n)
    Jg[n:, n:] = np.eye(n)
    Jf[n:, :n] = -0.5 * Wf
    Jf[:n, n:] = -0.5 * Wf.T
    Jg[n:, :n] = -0.5 * Wg
    Jg[:n, n:] = -0.5 * Wg.T
    return MultiplierPair(Jf=Jf, Jg=Jg)


@dataclass
class VariableLayout:
    """Scalar decision-variable layout: P upper triangle, then R_lmi, H, K."""

    n: int
    q: int

    @property
    def p_indices(self):
        return [(a, b) for a in range(self.n) for b in range(a, self.n)]

    @property
    def n_p(self):
        return self.n * (self.n + 1) // 2

    @property
    def n_gain(self):
        return self.n * self.q

    @property
    def nvars(self):
        return self.n_p + 3 * self.n_gain

    def sym_basis(self, a, b):
        E = np.zeros((self.n, self.n))
        E[a, b] = 1.0
        E[b, a] = 1.0
        return E

    def gain_basis(self, a, b):
        E = np.zeros((self.n, self.q))
        E[a, b] = 1.0
        return E

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        P = np.zeros((self.n, self.n))
        for k, (a, b) in enumerate(self.p_indices):
            P[a, b] = x[k]
            P[b, a] = x[k]
        def mat(off):
            return x[off:off + self.n_gain].reshape(self.n, self.q)
        o = self.n_p
        return P, mat(o), mat(o + self.n_gain), mat(o + 2 * self.n_gain)

    def slot(self, group):
        o = {"R": self.n_p, "H": self.n_p + self.n_gain, "K": self.n_p + 2 * self.n_gain}[group]
        return o


@dataclass
class ObserverGains:
    P: np.ndarray
    L: np.ndarray
    H: np.ndarray
    K: np.ndarray
    alpha: float
    certificate: SdpCertificate | None = None
    u_vertices: list = field(default_factory=list)
    direct_margins: list = field(default_factory=list)  # max eig of the L-explicit inequality per vertex

    def to_json(self, path=None):
        doc = {"P": self.P.tolist(), "L": self.L.tolist(), "H": self.H.tolist(),
               "K": self.K.tolist(), "alpha": self.alpha,
               "uVertices": [np.asarray(u).tolist() for u in self.u_vertices],
               "margins": {
                   "direct": list(self.direct_margins),
                   "lmi": list(self.certificate.per_constraint_margin) if self.certificate else [],
               }}
        if path is not None:
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
        return doc

    @classmethod
    def from_json(cls, source):
        if isinstance(source, dict):
            doc = source
        else:
            with open(source) as fh:
                doc = json.load(fh)
        return cls(P=np.asarray(doc["P"], dtype=float),
                   L=np.asarray(doc["L"], dtype=float),
                   H=np.asarray(doc["H"], dtype=float),
                   K=np.asarray(doc["K"], dtype=float),
                   alpha=float(doc["alpha"]),
                   u_vertices=[np.asarray(u, dtype=float) for u in doc.get("uVertices", [])],
                   direct_margins=list(doc.get("margins", {}).get("direct", [])))


def saturation_vertices(lambda_bar: float, m: int):
    """The 2^m corners of the saturated-input box [-lambda_bar, lambda_bar]^m."""
    return [np.array(v, dtype=float) for v in itertools.product((-lambda_bar, lambda_bar), repeat=m)]


def drift_matrix(bounds: JacobianBounds, u) -> np.ndarray:
    """Linear part of the error dynamics before output injection: Mf1 + Mg1 . u."""
    return bounds.Mf1 + contract_input(bounds.Mg1, np.asarray(u, dtype=float).reshape(-1))


def assemble_lmi(model: ControlAffineModel, alpha: float, u_vertices,
                 eps_p: float = 1e-6):
    """Affine constraints in (P upper triangle, R_lmi, H, K): one PD constraint
    on P plus one 2n x 2n NSD constraint per input vertex."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if eps_p <= 0:
        raise ValueError("eps_p must be positive")
    u_vertices = [np.asarray(u, dtype=float).reshape(-1) for u in u_vertices]
    if not u_vertices:
        raise ValueError("at least one input vertex is required")
    bounds = model.bounds
    if bounds is None:
        raise ValueError("model has no Jacobian bounds")
    n, q = model.n, model.q
    for u in u_vertices:
        if u.size != model.m:
            raise ValueError(f"vertex dimension {u.size} != m={model.m}")
    C = model.C
    layout = VariableLayout(n=n, q=q)
    d = 2 * n

    constraints = []
    pd_coeffs = [(k, layout.sym_basis(a, b)) for k, (a, b) in enumerate(layout.p_indices)]
    constraints.append(AffineMatrixConstraint(
        dim=n, constant=np.zeros((n, n)), coefficients=pd_coeffs,
        sense=PD, eps=eps_p, label="P_pd"))

    for vi, u in enumerate(u_vertices):
        mult = build_multipliers(bounds, u)
        Jf21 = mult.Jf[n:, :n]
        Jg21 = mult.Jg[n:, :n]
        A = drift_matrix(bounds, u)

        F0 = np.zeros((d, d))
        F0[n:, n:] = -(mult.Jf[n:, n:] + mult.Jg[n:, n:])  # -2I
        J21_0 = Jf21 + Jg21  # H = K = 0 part of J21
        F0[n:, :n] = -J21_0
        F0[:n, n:] = -J21_0.T

        coeffs = []
        for k, (a, b) in enumerate(layout.p_indices):
            E = layout.sym_basis(a, b)
            F = np.zeros((d, d))
            F[:n, :n] = A.T @ E + E @ A + 2.0 * alpha * E
            F[:n, n:] = E
            F[n:, :n] = E
            coeffs.append((k, F))
        for k, (a, b) in enumerate((a, b) for a in range(n) for b in range(q)):
            E = layout.gain_basis(a, b)
            F = np.zeros((d, d))
            F[:n, :n] = -(E @ C + C.T @ E.T)
            coeffs.append((layout.slot("R") + k, F))
        for group, J21_block in (("H", Jf21), ("K", Jg21)):
            for k, (a, b) in enumerate((a, b) for a in range(n) for b in range(q)):
                E = layout.gain_basis(a, b)
                B = J21_block @ E @ C  # -d(J21)/d(gain)
                F = np.zeros((d, d))
                F[n:, :n] = B
                F[:n, n:] = B.T
                coeffs.append((layout.slot(group) + k, F))
        constraints.append(AffineMatrixConstraint(
            dim=d, constant=F0, coefficients=coeffs, sense=NSD,
            label=f"vertex_{vi}"))
    return constraints, layout


def direct_inequality(model: ControlAffineModel, gains: ObserverGains, u) -> np.ndarray:
    """The L-explicit decay inequality block matrix at input u (no R substitution)."""
    bounds = model.bounds
    n = model.n
    C = model.C
    mult = build_multipliers(bounds, u)
    A = drift_matrix(bounds, u)
    Acl = A - gains.L @ C
    J21 = mult.Jf[n:, :n] @ (np.eye(n) - gains.H @ C) + mult.Jg[n:, :n] @ (np.eye(n) - gains.K @ C)
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = Acl.T @ gains.P + gains.P @ Acl + 2.0 * gains.alpha * gains.P
    M[:n, n:] = gains.P - J21.T
    M[n:, :n] = gains.P - J21
    M[n:, n:] = -(mult.Jf[n:, n:] + mult.Jg[n:, n:])
    return M


def evaluate_gains_in_lmi(model: ControlAffineModel, gains: ObserverGains, u_vertices):
    """Diagnostic: per-vertex extreme eigenvalues of the assembled constraints at
    given gains (P, L, H, K), substituting R_lmi = P L."""
    constraints, layout = assemble_lmi(model, gains.alpha, u_vertices)
    x = np.zeros(layout.nvars)
    for k, (a, b) in enumerate(layout.p_indices):
        x[k] = gains.P[a, b]
    x[layout.slot("R"):layout.slot("R") + layout.n_gain] = (gains.P @ gains.L).ravel()
    x[layout.slot("H"):layout.slot("H") + layout.n_gain] = gains.H.ravel()
    x[layout.slot("K"):layout.slot("K") + layout.n_gain] = gains.K.ravel()
    report = []
    for c in constraints:
        _, extreme = eval_constraint(c, x)
        report.append({"label": c.label, "sense": c.sense, "extreme_eig": extreme})
    return report


def synthesize(model: ControlAffineModel, alpha: float, u_vertices,
               eps_p: float = 1e-6, tol: float = 1e-7, max_iter: int = 2000,
               gain_reg: float = 100.0) -> ObserverGains:
    """Solve the convexified inequality and recover L = P^-1 R_lmi.

    ``gain_reg`` up-weights the regularization on the injection gains H and K;
    small injections keep the post-injection argument near the operating box,
    which the sampling verifiers rely on.
    """
    constraints, layout = assemble_lmi(model, alpha, u_vertices, eps_p)
    reg_weights = np.ones(layout.nvars)
    reg_weights[layout.slot("H"):layout.slot("H") + 2 * layout.n_gain] = gain_reg
    cert = solve_feasibility(constraints, layout.nvars, tol=tol, max_iter=max_iter,
                             reg_weights=reg_weights)
    if not cert.feasible:
        raise SynthesisError(
            f"observer synthesis {cert.status}: {cert.reason}; "
            f"margins={['%.3e' % m for m in cert.per_constraint_margin]}",
            certificate=cert)
    P, R, H, K = layout.unpack(cert.variables)
    if np.linalg.cond(P) > 1e12:
        raise ConditioningError(f"recovered P has condition number {np.linalg.cond(P):.3e}")
    L = np.linalg.solve(P, R)
    gains = ObserverGains(P=P, L=L, H=H, K=K, alpha=float(alpha),
                          certificate=cert,
                          u_vertices=[np.asarray(u, dtype=float).reshape(-1) for u in u_vertices])
    gains.direct_margins = [float(np.max(np.linalg.eigvalsh(direct_inequality(model, gains, u))))
                            for u in gains.u_vertices]
    return gains


# -- sampling-based verification --------------------------------------------

@dataclass
class SectorReport:
    n_samples: int
    n_skipped: int
    quad_violations: int
    worst_quad_f: float
    worst_quad_g: float
    hull_violations: int
    worst_hull: float

    @property
    def ok(self) -> bool:
        return self.quad_violations == 0 and self.hull_violations == 0


@dataclass
class DecayReport:
    n_samples: int
    n_skipped: int
    violations: int
    worst_slack: float  # max over samples of 2 e'P edot + 2 alpha e'P e

    @property
    def ok(self) -> bool:
        return self.violations == 0


def _sector_pieces(model, gains, x, xhat, u):
    """phi_f, phi_g and the shifted arguments for a single sample."""
    C = model.C
    y = C @ x
    innov = y - C @ xhat
    zf = xhat + (gains.H @ innov)
    zg = xhat + (gains.K @ innov)
    phi_f = model.fbar(x) - model.fbar(zf)
    phi_g = model.gbar(x, u) - model.gbar(zg, u)
    return phi_f, phi_g


def _hull(width_rows: np.ndarray, d: np.ndarray):
    """Per-component interval hull of {M d : M element-wise between 0 and width}."""
    terms = width_rows * d[np.newaxis, :]
    lo = np.sum(np.minimum(terms, 0.0), axis=1)
    hi = np.sum(np.maximum(terms, 0.0), axis=1)
    return lo, hi


def verify_sector(model: ControlAffineModel, gains: ObserverGains, samples: int,
                  lambda_bar: float = 3.0, tol: float = 1e-9,
                  seed: int = 0) -> SectorReport:
    """Check the sector quadratic forms and the DMVT interval-hull containment
    on random (x, xhat, u) triples."""
    rng = np.random.default_rng(seed)
    bounds = model.bounds
    n = model.n
    C = model.C
    IH = np.eye(n) - gains.H @ C
    IK = np.eye(n) - gains.K @ C
    Wf = bounds.f_width()
    quad_viol = 0
    hull_viol = 0
    worst_qf = -np.inf
    worst_qg = -np.inf
    worst_hull = -np.inf
    skipped = 0
    for _ in range(samples):
        x = rng.uniform(model.box[:, 0], model.box[:, 1])
        xhat = rng.uniform(model.box[:, 0], model.box[:, 1])
        u = rng.uniform(-lambda_bar, lambda_bar, size=model.m)
        try:
            phi_f, phi_g = _sector_pieces(model, gains, x, xhat, u)
        except EvaluationError:
            skipped += 1
            continue
        e = x - xhat
        dH = IH @ e
        dK = IK @ e
        Wg = contract_input(bounds.g_width(), u)
        qf = float(phi_f @ (phi_f - Wf @ dH))
        qg = float(phi_g @ (phi_g - Wg @ dK))
        worst_qf = max(worst_qf, qf)
        worst_qg = max(worst_qg, qg)
        if qf > tol or qg > tol:
            quad_viol += 1
        lo_f, hi_f = _hull(Wf, dH)
        lo_g, hi_g = _hull(Wg, dK)
        hv = max(float(np.max(np.maximum(lo_f - phi_f, phi_f - hi_f))),
                 float(np.max(np.maximum(lo_g - phi_g, phi_g - hi_g))))
        worst_hull = max(worst_hull, hv)
        if hv > tol:
            hull_viol += 1
    return SectorReport(n_samples=samples, n_skipped=skipped,
                        quad_violations=quad_viol,
                        worst_quad_f=worst_qf, worst_quad_g=worst_qg,
                        hull_violations=hull_viol, worst_hull=worst_hull)


def error_rhs(model: ControlAffineModel, gains: ObserverGains, x, xhat, u) -> np.ndarray:
    """Estimation-error dynamics edot at a sampled (x, xhat, u)."""
    phi_f, phi_g = _sector_pieces(model, gains, x, xhat, u)
    A = drift_matrix(model.bounds, u)
    e = x - xhat
    return (A - gains.L @ model.C) @ e + phi_f + phi_g


def verify_decay(model: ControlAffineModel, gains: ObserverGains, samples: int,
                 lambda_bar: float = 3.0, tol: float = 1e-8,
                 seed: int = 0) -> DecayReport:
    """Check 2 e'P edot <= -2 alpha e'P e on random (x, xhat, u) triples."""
    rng = np.random.default_rng(seed)
    violations = 0
    worst = -np.inf
    skipped = 0
    for _ in range(samples):
        x = rng.uniform(model.box[:, 0], model.box[:, 1])
        xhat = rng.uniform(model.box[:, 0], model.box[:, 1])
        u = rng.uniform(-lambda_bar, lambda_bar, size=model.m)
        try:
            edot = error_rhs(model, gains, x, xhat, u)
        except EvaluationError:
            skipped += 1
            continue
        e = x - xhat
        slack = float(2.0 * e @ gains.P @ edot + 2.0 * gains.alpha * e @ gains.P @ e)
        worst = max(worst, slack)
        if slack > tol:
            violations += 1
    return DecayReport(n_samples=samples, n_skipped=skipped,
                       violations=violations, worst_slack=worst)
