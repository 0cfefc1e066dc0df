"""Fixed-step closed-loop simulation harness.

Integrates the plant, the observer, and the critic update laws as one
coupled ODE with classical fourth-order Runge-Kutta steps.  Within each
stage the control is a single shared policy evaluation at the current state
estimate (output feedback: the plant state enters only through y = Cx).
The running cost Q(x) + U(u) is accumulated by the same quadrature stages.
Traces are exported as CSV plus a JSON summary; identical configs produce
byte-identical traces.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .critic import (BasisSpec, CostSpec, ExtrapolationSet, LearnerGains,
                     GainCorruptionError, control_penalty,
                     critic_derivatives_arrays, load_basis, pe_metric_arrays,
                     policy)
from .model import ControlAffineModel, EvaluationError, load_model
from .runtime import error_energy, observer_rhs
from .synthesis import ObserverGains

GAMMA_FLOOR = 1e-10


class DivergenceError(RuntimeError):
    """State left the finite domain during integration."""


class ConfigError(ValueError):
    """Simulation configuration is invalid."""


@dataclass
class SimConfig:
    model: ControlAffineModel
    gains: ObserverGains
    cost: CostSpec
    basis: BasisSpec
    learner: LearnerGains
    x0: np.ndarray
    xhat0: np.ndarray
    Wc0: np.ndarray
    Gamma0: np.ndarray
    extrap_box: list  # [(lo, hi), ...] per axis
    extrap_per_axis: int = 10
    h: float = 1e-3
    T: float = 50.0
    notes: list = field(default_factory=list)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.xhat0 = np.asarray(self.xhat0, dtype=float)
        self.Wc0 = np.asarray(self.Wc0, dtype=float)
        self.Gamma0 = np.asarray(self.Gamma0, dtype=float)
        if self.h <= 0:
            raise ConfigError("step size h must be positive")
        if self.T < self.h:
            raise ConfigError("horizon T must be at least one step")
        if np.any(np.linalg.eigvalsh(0.5 * (self.Gamma0 + self.Gamma0.T)) <= 0):
            raise ConfigError("Gamma0 must be positive definite")

    def digest(self) -> str:
        """Deterministic hash of the numeric configuration."""
        payload = {
            "model": self.model.name,
            "gains": self.gains.to_json(),
            "Qm": self.cost.Qm.tolist(), "r": self.cost.r.tolist(),
            "lambda_bar": self.cost.lambda_bar,
            "basis": self.basis.name,
            "kc": self.learner.kc, "gamma_norm": self.learner.gamma_norm,
            "beta": self.learner.beta,
            "x0": self.x0.tolist(), "xhat0": self.xhat0.tolist(),
            "Wc0": self.Wc0.tolist(), "Gamma0": self.Gamma0.tolist(),
            "extrap_box": [list(b) for b in self.extrap_box],
            "extrap_per_axis": self.extrap_per_axis,
            "h": self.h, "T": self.T,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_json(cls, source, gains: ObserverGains | None = None):
        """Build a config from a JSON document (path or dict).

        Field names mirror the dataclass; "model" takes a builtin name or a
        model file, "gains" a gains file (or pass a gains object directly).
        """
        if isinstance(source, (str, os.PathLike)):
            with open(source) as fh:
                doc = json.load(fh)
        else:
            doc = dict(source)
        try:
            model = load_model(doc["model"])
            if model.bounds is None:
                model = model.with_bounds(model.derive_bounds())
            if gains is None:
                gains = ObserverGains.from_json(doc["gains"])
            cost = CostSpec(Qm=doc["cost"]["Qm"], r=doc["cost"]["r"],
                            lambda_bar=doc["cost"].get("lambda_bar", 3.0))
            basis = load_basis(doc.get("basis", "quadratic2d"))
            lrn = doc.get("learner", {})
            learner = LearnerGains(kc=lrn.get("kc", 0.01),
                                   gamma_norm=lrn.get("gamma_norm", 0.7),
                                   beta=lrn.get("beta", 0.2))
            return cls(model=model, gains=gains, cost=cost, basis=basis,
                       learner=learner,
                       x0=doc["x0"], xhat0=doc["xhat0"], Wc0=doc["Wc0"],
                       Gamma0=doc["Gamma0"],
                       extrap_box=doc.get("extrap_box", [(-1.0, 1.0)] * model.n),
                       extrap_per_axis=doc.get("extrap_per_axis", 10),
                       h=doc.get("h", 1e-3), T=doc.get("T", 50.0))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad simulation config: {exc}") from exc


def reproduce_example_config(gains: ObserverGains, h: float = 1e-3,
                             T: float = 50.0) -> SimConfig:
    """Two-state benchmark experiment configuration."""
    model = load_model("example2state")
    if model.bounds is None:
        model = model.with_bounds(model.derive_bounds())
    return SimConfig(
        model=model, gains=gains,
        cost=CostSpec(Qm=5.0 * np.eye(2), r=[1.0], lambda_bar=3.0),
        basis=load_basis("quadratic2d"),
        learner=LearnerGains(kc=0.01, gamma_norm=0.7, beta=0.2),
        x0=[-1.0, 1.0], xhat0=[2.0, 1.5],
        Wc0=[0.4, 0.2, 0.8], Gamma0=50.0 * np.eye(3),
        extrap_box=[(-1.0, 1.0), (-1.0, 1.0)], extrap_per_axis=10,
        h=h, T=T,
        notes=["normalization gain gamma_norm carries the experiment's "
               "otherwise-unnamed constant 0.7"])


@dataclass
class SimTrace:
    t: np.ndarray  # (K,)
    x: np.ndarray  # (K, n)
    xhat: np.ndarray  # (K, n)
    u: np.ndarray  # (K, m)
    Wc: np.ndarray  # (K, L)
    Ve: np.ndarray  # (K,)
    pe: np.ndarray  # (K,)
    J: np.ndarray  # (K,)
    gamma_min: np.ndarray  # (K,)
    gamma_max: np.ndarray  # (K,)
    reason: str = "completed"
    meta: dict = field(default_factory=dict)

    @property
    def e(self) -> np.ndarray:
        return self.x - self.xhat

    def summary(self) -> dict:
        if self.t.size == 0:
            return {"reason": self.reason, "steps": 0, **self.meta}
        last = -1
        return {
            "reason": self.reason,
            "steps": int(self.t.size),
            "t_final": float(self.t[last]),
            "x_final": self.x[last].tolist(),
            "xhat_final": self.xhat[last].tolist(),
            "e_final_norm": float(np.linalg.norm(self.e[last])),
            "Wc_final": self.Wc[last].tolist(),
            "J_final": float(self.J[last]),
            "max_abs_u": float(np.max(np.abs(self.u))),
            "min_pe": float(np.min(self.pe)),
            "min_gamma_eig": float(np.min(self.gamma_min)),
            "max_gamma_eig": float(np.max(self.gamma_max)),
            "Ve_final": float(self.Ve[last]),
            **self.meta,
        }


def _derivatives(cfg: SimConfig, extrap: ExtrapolationSet,
                 x, xhat, Wc, Gamma):
    """Coupled right-hand side at one integration stage.

    Returns (xdot, xhatdot, WcDot, GammaDot, Jdot, u).
    """
    u = policy(cfg.model, cfg.basis, cfg.cost, xhat, Wc)
    y = cfg.model.C @ x
    xdot = cfg.model.eval_dynamics(x, u)
    xhatdot = observer_rhs(cfg.model, cfg.gains, xhat, y, u)
    delta, omega, rho = extrap.batch_arrays(cfg.learner, Wc)
    wc_dot, gamma_dot = critic_derivatives_arrays(Gamma, cfg.learner,
                                                  delta, omega, rho)
    jdot = cfg.cost.state_cost(x) + control_penalty(cfg.cost, u)
    return xdot, xhatdot, wc_dot, gamma_dot, jdot, u


def step(cfg: SimConfig, extrap: ExtrapolationSet, x, xhat, Wc, Gamma, Jacc,
         h: float):
    """One classical Runge-Kutta step of the coupled closed loop.

    Returns (x, xhat, Wc, Gamma, Jacc, u0) where u0 is the control at the
    step's start (the logged value).
    """
    k1 = _derivatives(cfg, extrap, x, xhat, Wc, Gamma)
    k2 = _derivatives(cfg, extrap, x + 0.5 * h * k1[0], xhat + 0.5 * h * k1[1],
                      Wc + 0.5 * h * k1[2], Gamma + 0.5 * h * k1[3])
    k3 = _derivatives(cfg, extrap, x + 0.5 * h * k2[0], xhat + 0.5 * h * k2[1],
                      Wc + 0.5 * h * k2[2], Gamma + 0.5 * h * k2[3])
    k4 = _derivatives(cfg, extrap, x + h * k3[0], xhat + h * k3[1],
                      Wc + h * k3[2], Gamma + h * k3[3])
    w = h / 6.0
    x = x + w * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    xhat = xhat + w * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    Wc = Wc + w * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    Gamma = Gamma + w * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    Gamma = 0.5 * (Gamma + Gamma.T)
    Jacc = Jacc + w * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
    return x, xhat, Wc, Gamma, Jacc, k1[5]


def _first_nonfinite(t, **named):
    for name, arr in named.items():
        arr = np.atleast_1d(np.asarray(arr))
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            return f"{name}[{bad[0]}] non-finite at t={t:.6f}"
    return None


def run(cfg: SimConfig, raise_on_divergence: bool = False) -> SimTrace:
    """Integrate from t=0 to T, logging every step.

    Terminates early with a partial trace and a recorded reason on
    divergence or on the least-squares gain losing positive definiteness.
    """
    extrap = ExtrapolationSet.uniform_grid(cfg.model, cfg.basis, cfg.cost,
                                           cfg.extrap_box, cfg.extrap_per_axis)
    nsteps = int(round(cfg.T / cfg.h))
    x, xhat = cfg.x0.copy(), cfg.xhat0.copy()
    Wc, Gamma, Jacc = cfg.Wc0.copy(), cfg.Gamma0.copy(), 0.0

    rows = {k: [] for k in ("t", "x", "xhat", "u", "Wc", "Ve", "pe", "J",
                            "gmin", "gmax")}
    reason = "completed"

    def log(t, u):
        _, omega, rho = extrap.batch_arrays(cfg.learner, Wc)
        geig = np.linalg.eigvalsh(Gamma)
        rows["t"].append(t)
        rows["x"].append(x.copy())
        rows["xhat"].append(xhat.copy())
        rows["u"].append(np.atleast_1d(u).copy())
        rows["Wc"].append(Wc.copy())
        rows["Ve"].append(error_energy(cfg.gains, x - xhat))
        rows["pe"].append(pe_metric_arrays(omega, rho))
        rows["J"].append(Jacc)
        rows["gmin"].append(float(geig[0]))
        rows["gmax"].append(float(geig[-1]))
        return float(geig[0])

    for k in range(nsteps):
        t = k * cfg.h
        try:
            xn, xhn, Wcn, Gn, Jn, u0 = step(cfg, extrap, x, xhat, Wc, Gamma,
                                            Jacc, cfg.h)
        except EvaluationError as exc:
            reason = f"trajectory escape at t={t:.6f}: {exc}"
            break
        bad = _first_nonfinite(t + cfg.h, x=xn, xhat=xhn, Wc=Wcn, Gamma=Gn,
                               J=Jn)
        if bad is not None:
            reason = f"divergence: {bad}"
            break
        gmin = log(t, u0)
        x, xhat, Wc, Gamma, Jacc = xn, xhn, Wcn, Gn, Jn
        if gmin < GAMMA_FLOOR:
            reason = (f"least-squares gain floor breached at t={t:.6f} "
                      f"(min eig {gmin:.3e})")
            break
    else:
        # closing record at t = T with the terminal control
        uT = policy(cfg.model, cfg.basis, cfg.cost, xhat, Wc)
        log(nsteps * cfg.h, uT)

    if reason.startswith("divergence") and raise_on_divergence:
        raise DivergenceError(reason)

    trace = SimTrace(
        t=np.array(rows["t"]), x=np.array(rows["x"]),
        xhat=np.array(rows["xhat"]), u=np.array(rows["u"]),
        Wc=np.array(rows["Wc"]), Ve=np.array(rows["Ve"]),
        pe=np.array(rows["pe"]), J=np.array(rows["J"]),
        gamma_min=np.array(rows["gmin"]), gamma_max=np.array(rows["gmax"]),
        reason=reason,
        meta={"config_digest": cfg.digest(), "h": cfg.h, "T": cfg.T,
              "notes": list(cfg.notes)})
    return trace


def trace_columns(trace: SimTrace) -> tuple[list, np.ndarray]:
    """Column names and stacked data for CSV export."""
    K, n = trace.x.shape
    m = trace.u.shape[1] if trace.u.size else 1
    L = trace.Wc.shape[1]
    names = (["t"]
             + [f"x{i+1}" for i in range(n)]
             + [f"xhat{i+1}" for i in range(n)]
             + [f"e{i+1}" for i in range(n)]
             + [f"u{i+1}" for i in range(m)]
             + [f"Wc{i+1}" for i in range(L)]
             + ["Ve", "pe", "J"])
    if K == 0:
        return names, np.zeros((0, len(names)))
    data = np.column_stack([trace.t, trace.x, trace.xhat, trace.e, trace.u,
                            trace.Wc, trace.Ve, trace.pe, trace.J])
    return names, data


def export(trace: SimTrace, out_dir: str) -> dict:
    """Write trace.csv and summary.json; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    names, data = trace_columns(trace)
    csv_path = os.path.join(out_dir, "trace.csv")
    with open(csv_path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(trace.summary(), fh, indent=2)
        fh.write("\n")
    return {"trace": csv_path, "summary": summary_path}
