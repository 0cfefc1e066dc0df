"""Small dense semidefinite feasibility solver.

Finds a point satisfying a set of affine symmetric-matrix constraints
(negative-semidefinite, or positive-definite with margin) or declares the
set infeasible.  The method is a phase-I log-det barrier interior point
(damped Newton on the common violation level); the deliverable is the
certificate (re-checkable margins), not the path taken to it.  Intended
for matrices up to ~20 x 20 and a few dozen scalar variables.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

NSD = "nsd"
PD = "pd"

_SYM_TOL = 1e-12


@dataclass
class AffineMatrixConstraint:
    """F0 + sum_j x_j F_j, required NSD or PD-with-margin eps."""

    dim: int
    constant: np.ndarray
    coefficients: list  # [(variable index, d x d symmetric matrix), ...]
    sense: str = NSD
    eps: float = 0.0
    label: str = ""

    def __post_init__(self):
        self.constant = _check_sym(np.asarray(self.constant, dtype=float), self.dim)
        self.coefficients = [(int(j), _check_sym(np.asarray(F, dtype=float), self.dim))
                             for j, F in self.coefficients]
        if self.sense not in (NSD, PD):
            raise ValueError(f"unknown constraint sense: {self.sense!r}")

    def scale(self) -> float:
        s = np.max(np.abs(self.constant), initial=0.0)
        for _, F in self.coefficients:
            s = max(s, np.max(np.abs(F), initial=0.0))
        return max(s, 1.0)


def _check_sym(F: np.ndarray, dim: int) -> np.ndarray:
    if F.shape != (dim, dim):
        raise ValueError(f"constraint matrix has shape {F.shape}, expected {(dim, dim)}")
    if np.max(np.abs(F - F.T), initial=0.0) > _SYM_TOL * max(1.0, np.max(np.abs(F))):
        raise ValueError("constraint matrix is not symmetric")
    return 0.5 * (F + F.T)


@dataclass
class SdpCertificate:
    variables: np.ndarray
    per_constraint_margin: list  # extreme eigenvalue per constraint (max for NSD, min for PD)
    status: str  # "feasible" | "infeasible" | "max_iterations"
    reason: str = ""
    penalty: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def eval_constraint(constraint: AffineMatrixConstraint,
                    variables: np.ndarray) -> tuple[np.ndarray, float]:
    """Evaluated matrix and its relevant extreme eigenvalue."""
    variables = np.asarray(variables, dtype=float)
    M = constraint.constant.copy()
    for j, F in constraint.coefficients:
        if j >= variables.size:
            raise ValueError(f"variable index {j} out of range for {variables.size} variables")
        M += variables[j] * F
    w = np.linalg.eigvalsh(M)
    extreme = float(w[-1]) if constraint.sense == NSD else float(w[0])
    return M, extreme


def classify(constraints, variables, tol) -> tuple[list, bool]:
    margins = []
    ok = True
    for c in constraints:
        _, extreme = eval_constraint(c, variables)
        margins.append(extreme)
        if c.sense == NSD and extreme > tol:
            ok = False
        if c.sense == PD and extreme < c.eps - tol:
            ok = False
    return margins, ok


def _violation(constraint: AffineMatrixConstraint, x) -> float:
    """How far the constraint is from holding (positive = violated)."""
    _, extreme = eval_constraint(constraint, x)
    if constraint.sense == NSD:
        return extreme
    return constraint.eps - extreme


def solve_feasibility(constraints, nvars: int, tol: float = 1e-7,
                      max_iter: int = 500, margin: float = 1e-4,
                      reg: float = 1e-8, reg_weights: np.ndarray | None = None,
                      x0: np.ndarray | None = None,
                      centering_reg: float = 1e-4) -> SdpCertificate:
    """Search for a strictly feasible point of the given affine matrix constraints.

    Phase-I log-det barrier interior point: minimize the common violation
    level t subject to every (scale-normalized) constraint holding with slack
    t, by damped Newton steps on  tau * (t + reg * |x|^2) + barrier  with a
    geometrically increasing tau.  Driving t well below zero leaves the
    returned point in the interior of the feasible set rather than on its
    boundary.  The status is decided purely by re-evaluated margins against
    ``tol``; the barrier objective also yields a lower bound on the best
    achievable level, which backs the infeasibility verdict.  Deterministic.
    """
    if nvars < 1:
        raise ValueError("nvars must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    for c in constraints:
        for j, _ in c.coefficients:
            if j >= nvars:
                raise ValueError(f"constraint references variable {j} beyond nvars={nvars}")

    w_reg = np.full(nvars, reg) if reg_weights is None else reg * np.asarray(reg_weights, dtype=float)
    # Normalize each constraint so one violation level t is meaningful for all.
    norm = []
    for c in constraints:
        s = c.scale()
        sign = -1.0 if c.sense == NSD else 1.0
        # slack matrix S(x, t) = sign*(F0 + sum x_j F_j - shift*I) + t*I, must stay PD
        shift = 0.0 if c.sense == NSD else c.eps
        norm.append((sign, (c.constant - shift * np.eye(c.dim)) / s,
                     [(j, F / s) for j, F in c.coefficients], c.dim))

    def slacks(x, t):
        out = []
        for sign, G0, coeffs, d in norm:
            G = G0.copy()
            for j, F in coeffs:
                G += x[j] * F
            out.append(sign * G + t * np.eye(d))
        return out

    def normalized_violation(x):
        v = -np.inf
        for sign, G0, coeffs, d in norm:
            G = G0.copy()
            for j, F in coeffs:
                G += x[j] * F
            w = np.linalg.eigvalsh(sign * G)
            v = max(v, -float(w[0]))
        return v

    x = np.zeros(nvars) if x0 is None else np.asarray(x0, dtype=float).copy()
    t = normalized_violation(x) + 1.0
    total_dim = sum(d for _, _, _, d in norm)
    n_aug = nvars + 1

    newton_budget = max(50, max_iter)
    newton_used = 0
    tau = 1.0
    tau_max = 1e8
    target_level = -max(0.05, margin)  # stop once comfortably interior

    while True:
        # inner: damped Newton on tau*(t + reg|x|^2) - sum logdet S
        for _ in range(60):
            if newton_used >= newton_budget:
                break
            S_list = slacks(x, t)
            grad = np.zeros(n_aug)
            hess = np.zeros((n_aug, n_aug))
            grad[:nvars] = tau * 2.0 * w_reg * x
            grad[-1] = tau
            hess[:nvars, :nvars] = np.diag(tau * 2.0 * w_reg)
            ok = True
            for (sign, G0, coeffs, d), S in zip(norm, S_list):
                try:
                    Sinv = np.linalg.inv(S)
                except np.linalg.LinAlgError:
                    ok = False
                    break
                # dS/dx_j = sign * F_j ; dS/dt = I
                Ws = [(j, Sinv @ (sign * F)) for j, F in coeffs]
                Wt = Sinv
                for j, W in Ws:
                    grad[j] -= np.trace(W)
                grad[-1] -= np.trace(Wt)
                for a, (j, Wj) in enumerate(Ws):
                    for k, Wk in Ws[a:]:
                        h = float(np.sum(Wj * Wk.T))
                        hess[j, k] += h
                        if j != k:
                            hess[k, j] += h
                    h = float(np.sum(Wj * Wt.T))
                    hess[j, -1] += h
                    hess[-1, j] += h
                hess[-1, -1] += float(np.sum(Wt * Wt.T))
            if not ok:
                break
            try:
                step = np.linalg.solve(hess + 1e-12 * np.eye(n_aug), -grad)
            except np.linalg.LinAlgError:
                break
            decrement = float(-grad @ step)
            # trust region: ill-conditioned Hessians can produce giant steps
            cap = 10.0 * (1.0 + float(np.linalg.norm(x)) + abs(t))
            step_norm = float(np.linalg.norm(step))
            if step_norm > cap:
                step = step * (cap / step_norm)
                decrement = float(-grad @ step)
            # backtracking line search keeping every slack PD
            alpha = 1.0
            base_obj = tau * (t + float(w_reg @ (x * x)))
            for S in S_list:
                base_obj -= float(np.linalg.slogdet(S)[1])
            accepted = False
            for _ in range(40):
                xn = x + alpha * step[:nvars]
                tn = t + alpha * step[-1]
                Sn = slacks(xn, tn)
                if all(np.all(np.linalg.eigvalsh(S) > 0.0) for S in Sn):
                    obj = tau * (tn + float(w_reg @ (xn * xn)))
                    for S in Sn:
                        obj -= float(np.linalg.slogdet(S)[1])
                    if obj <= base_obj - 0.25 * alpha * max(decrement, 0.0):
                        accepted = True
                        break
                alpha *= 0.5
            newton_used += 1
            if not accepted:
                break
            x, t = xn, tn
            if t <= target_level or decrement < 1e-10:
                break
        if t <= target_level or tau >= tau_max or newton_used >= newton_budget:
            break
        tau *= 10.0

    margins, ok = classify(constraints, x, tol)
    if ok:
        # Phase II, analytic centering: minimize the pure barrier at level
        # t = 0 with a moderate quadratic regularizer.  Phase I stops at the
        # first strictly feasible point, which often sits near the boundary
        # with badly scaled variables; the center is well conditioned.
        w_cen = w_reg * (centering_reg / reg) if reg > 0 else np.full(nvars, centering_reg)
        for _ in range(80):
            S_list = slacks(x, 0.0)
            grad = 2.0 * w_cen * x
            hess = np.diag(2.0 * w_cen).astype(float)
            bad = False
            for (sign, G0, coeffs, d), S in zip(norm, S_list):
                try:
                    Sinv = np.linalg.inv(S)
                except np.linalg.LinAlgError:
                    bad = True
                    break
                Ws = [(j, Sinv @ (sign * F)) for j, F in coeffs]
                for j, W in Ws:
                    grad[j] -= np.trace(W)
                for a, (j, Wj) in enumerate(Ws):
                    for k, Wk in Ws[a:]:
                        h = float(np.sum(Wj * Wk.T))
                        hess[j, k] += h
                        if j != k:
                            hess[k, j] += h
            if bad:
                break
            try:
                step = np.linalg.solve(hess + 1e-12 * np.eye(nvars), -grad)
            except np.linalg.LinAlgError:
                break
            decrement = float(-grad @ step)
            if decrement < 1e-9:
                break
            alpha = 1.0
            base = float(w_cen @ (x * x))
            for S in S_list:
                base -= float(np.linalg.slogdet(S)[1])
            accepted = False
            for _ in range(40):
                xn = x + alpha * step
                Sn = slacks(xn, 0.0)
                if all(np.all(np.linalg.eigvalsh(S) > 0.0) for S in Sn):
                    obj = float(w_cen @ (xn * xn))
                    for S in Sn:
                        obj -= float(np.linalg.slogdet(S)[1])
                    if obj <= base - 0.25 * alpha * decrement:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                break
            x = xn
        margins, ok = classify(constraints, x, tol)
    # barrier duality: the optimal level satisfies t* >= t - total_dim / tau
    lower_bound = t - total_dim / tau
    if ok:
        status, reason = "feasible", ""
    elif newton_used >= newton_budget:
        status, reason = "max_iterations", "Newton iteration budget exhausted before feasibility"
    elif lower_bound > 0.0:
        status = "infeasible"
        reason = (f"best achievable violation level bounded below by "
                  f"{lower_bound:.3e} > 0 (normalized units)")
    else:
        status = "infeasible"
        reason = f"violation level stagnated at {t:.3e} (normalized units)"
    return SdpCertificate(variables=x, per_constraint_margin=margins,
                          status=status, reason=reason, penalty=float(max(t, 0.0)))


def dump_constraints(constraints, out_dir: str) -> list[str]:
    """Debug dump: one row-major CSV file per constraint (constant, then coefficients)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, c in enumerate(constraints):
        path = os.path.join(out_dir, f"constraint_{i:03d}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["block", "var_index"] + [f"m{k}" for k in range(c.dim * c.dim)])
            writer.writerow(["constant", ""] + [f"{v:.17g}" for v in c.constant.ravel()])
            for j, F in c.coefficients:
                writer.writerow(["coefficient", j] + [f"{v:.17g}" for v in F.ravel()])
        paths.append(path)
    return paths
