"""Control-affine models with element-wise Jacobian bounds.

A model is the tuple (f, g, C) of ``xdot = f(x) + g(x) u``, ``y = C x``
together with a compact operating box and element-wise bounds on the
Jacobians of f and g over that box.  The shifted dynamics

    fbar(x)    = f(x) - Mf1 x
    gbar(x, u) = g(x) u - (Mg1 . u) x

have Jacobians confined to [0, Mf2 - Mf1] and [0, (Mg2 - Mg1) . u],
which is what the observer synthesis consumes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class EvaluationError(RuntimeError):
    """Dynamics evaluation produced a non-finite value."""


class DomainWarning(RuntimeWarning):
    """State left the compact operating box; bounds no longer certified."""


def contract_input(Mg: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Contract an n x n x m bound array with an input vector: sum_k Mg[:,:,k] u_k."""
    return np.einsum("ijk,k->ij", Mg, u)


@dataclass(frozen=True)
class JacobianBounds:
    """Element-wise Jacobian bounds (Mf1 <= df/dx <= Mf2, per-column for g)."""

    Mf1: np.ndarray  # (n, n)
    Mf2: np.ndarray  # (n, n)
    Mg1: np.ndarray  # (n, n, m)
    Mg2: np.ndarray  # (n, n, m)

    def __post_init__(self):
        for name in ("Mf1", "Mf2", "Mg1", "Mg2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.Mf1.shape != self.Mf2.shape or self.Mf1.ndim != 2:
            raise ValueError("Mf1/Mf2 must be matching n x n arrays")
        if self.Mg1.shape != self.Mg2.shape or self.Mg1.ndim != 3:
            raise ValueError("Mg1/Mg2 must be matching n x n x m arrays")
        if np.any(self.Mf1 > self.Mf2 + 1e-12) or np.any(self.Mg1 > self.Mg2 + 1e-12):
            raise ValueError("lower bounds exceed upper bounds")

    @property
    def n(self) -> int:
        return self.Mf1.shape[0]

    @property
    def m(self) -> int:
        return self.Mg1.shape[2]

    def f_width(self) -> np.ndarray:
        return self.Mf2 - self.Mf1

    def g_width(self) -> np.ndarray:
        return self.Mg2 - self.Mg1


@dataclass(frozen=True)
class ShiftedEvaluation:
    fbar: np.ndarray
    gbar: np.ndarray


@dataclass
class BoundReport:
    """Worst element-wise margin of sampled finite-difference Jacobians.

    ``worst_violation`` is negative when every sampled Jacobian lies inside
    the declared bounds.
    """

    worst_violation: float
    n_samples: int
    n_skipped: int
    worst_location: str = ""

    @property
    def ok(self) -> bool:
        return self.worst_violation <= 0.0


@dataclass(frozen=True)
class ControlAffineModel:
    n: int
    m: int
    q: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    C: np.ndarray
    box: np.ndarray  # (n, 2) per-axis [lo, hi]
    bounds: JacobianBounds | None = None
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float).reshape(self.q, self.n))
        object.__setattr__(self, "box", np.asarray(self.box, dtype=float).reshape(self.n, 2))
        if np.any(self.box[:, 0] >= self.box[:, 1]):
            raise ValueError("box lower limits must be below upper limits")

    def in_box(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.box[:, 0]) and np.all(x <= self.box[:, 1]))

    def with_bounds(self, bounds: JacobianBounds) -> "ControlAffineModel":
        return ControlAffineModel(self.n, self.m, self.q, self.f, self.g,
                                  self.C, self.box, bounds, self.name)

    # -- evaluation ---------------------------------------------------------

    def eval_dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """f(x) + g(x) u, with a soft domain warning outside the box."""
        x = np.asarray(x, dtype=float).reshape(self.n)
        u = np.asarray(u, dtype=float).reshape(self.m)
        if not self.in_box(x):
            warnings.warn("state outside operating box; Jacobian bounds not certified",
                          DomainWarning, stacklevel=2)
        fx = np.asarray(self.f(x), dtype=float).reshape(self.n)
        gx = np.asarray(self.g(x), dtype=float).reshape(self.n, self.m)
        out = fx + gx @ u
        if not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.isfinite(out))[0])
            raise EvaluationError(f"non-finite dynamics component {bad} at x={x}")
        return out

    def eval_shifted(self, x: np.ndarray, u: np.ndarray) -> ShiftedEvaluation:
        """Shifted drift fbar(x) and input term gbar(x, u)."""
        if self.bounds is None:
            raise ValueError("model has no Jacobian bounds; call derive_bounds first")
        x = np.asarray(x, dtype=float).reshape(self.n)
        u = np.asarray(u, dtype=float).reshape(self.m)
        fx = np.asarray(self.f(x), dtype=float).reshape(self.n)
        gx = np.asarray(self.g(x), dtype=float).reshape(self.n, self.m)
        fbar = fx - self.bounds.Mf1 @ x
        gbar = gx @ u - contract_input(self.bounds.Mg1, u) @ x
        if not (np.all(np.isfinite(fbar)) and np.all(np.isfinite(gbar))):
            raise EvaluationError(f"non-finite shifted dynamics at x={x}, u={u}")
        return ShiftedEvaluation(fbar=fbar, gbar=gbar)

    def fbar(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        fx = np.asarray(self.f(x), dtype=float).reshape(self.n)
        out = fx - self.bounds.Mf1 @ x
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite fbar at x={x}")
        return out

    def gbar(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(self.n)
        u = np.asarray(u, dtype=float).reshape(self.m)
        gx = np.asarray(self.g(x), dtype=float).reshape(self.n, self.m)
        out = gx @ u - contract_input(self.bounds.Mg1, u) @ x
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite gbar at x={x}, u={u}")
        return out

    # -- Jacobians ----------------------------------------------------------

    def fd_jacobians(self, x: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Central finite-difference Jacobians of f (n x n) and g (n x n x m)."""
        x = np.asarray(x, dtype=float).reshape(self.n)
        Jf = np.empty((self.n, self.n))
        Jg = np.empty((self.n, self.n, self.m))
        for j in range(self.n):
            dx = np.zeros(self.n)
            dx[j] = step
            fp = np.asarray(self.f(x + dx), dtype=float).reshape(self.n)
            fm = np.asarray(self.f(x - dx), dtype=float).reshape(self.n)
            gp = np.asarray(self.g(x + dx), dtype=float).reshape(self.n, self.m)
            gm = np.asarray(self.g(x - dx), dtype=float).reshape(self.n, self.m)
            Jf[:, j] = (fp - fm) / (2.0 * step)
            Jg[:, j, :] = (gp - gm) / (2.0 * step)
        return Jf, Jg

    def default_fd_step(self) -> float:
        # 1e-5 of the widest box axis balances truncation and round-off
        return 1e-5 * float(np.max(self.box[:, 1] - self.box[:, 0]))

    def check_jacobian_bounds(self, samples: int, step: float | None = None,
                              seed: int = 0) -> BoundReport:
        """Sample the box and report the worst bound-violation margin."""
        if self.bounds is None:
            raise ValueError("model has no Jacobian bounds to check")
        if samples < 1:
            raise ValueError("samples must be >= 1")
        step = self.default_fd_step() if step is None else float(step)
        if step <= 0:
            raise ValueError("step must be positive")
        rng = np.random.default_rng(seed)
        worst = -np.inf
        where = ""
        skipped = 0
        for _ in range(samples):
            x = rng.uniform(self.box[:, 0], self.box[:, 1])
            try:
                Jf, Jg = self.fd_jacobians(x, step)
            except (EvaluationError, FloatingPointError):
                skipped += 1
                continue
            vf = max(np.max(self.bounds.Mf1 - Jf), np.max(Jf - self.bounds.Mf2))
            vg = max(np.max(self.bounds.Mg1 - Jg), np.max(Jg - self.bounds.Mg2))
            v = max(vf, vg)
            if v > worst:
                worst = v
                where = f"x={x}" + (" (f)" if vf >= vg else " (g)")
        return BoundReport(worst_violation=float(worst), n_samples=samples,
                           n_skipped=skipped, worst_location=where)

    def derive_bounds(self, grid: int = 101, margin: float = 0.05,
                      step: float | None = None) -> JacobianBounds:
        """Element-wise min/max finite-difference Jacobians over a dense grid.

        Intervals are inflated by ``margin`` times their width, so exact
        (zero-width) entries of linear dynamics stay exact.
        """
        if grid < 2:
            raise ValueError("grid must be >= 2 points per axis")
        step = self.default_fd_step() if step is None else float(step)
        axes = [np.linspace(lo, hi, grid) for lo, hi in self.box]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        fmin = np.full((self.n, self.n), np.inf)
        fmax = np.full((self.n, self.n), -np.inf)
        gmin = np.full((self.n, self.n, self.m), np.inf)
        gmax = np.full((self.n, self.n, self.m), -np.inf)
        for x in pts:
            Jf, Jg = self.fd_jacobians(x, step)
            np.minimum(fmin, Jf, out=fmin)
            np.maximum(fmax, Jf, out=fmax)
            np.minimum(gmin, Jg, out=gmin)
            np.maximum(gmax, Jg, out=gmax)
        fw, gw = fmax - fmin, gmax - gmin
        return JacobianBounds(Mf1=fmin - margin * fw, Mf2=fmax + margin * fw,
                              Mg1=gmin - margin * gw, Mg2=gmax + margin * gw)


# -- built-in models --------------------------------------------------------

def example_two_state(box=((-2.0, 2.0), (-2.0, 2.0))) -> ControlAffineModel:
    """Two-state benchmark with a single cosine-modulated input channel."""

    def f(x):
        c = np.cos(2.0 * x[0]) + 2.0
        return np.array([-x[0] + x[1],
                         -x[0] - 0.5 * x[1] * (1.0 - c * c)])

    def g(x):
        return np.array([[0.0], [np.cos(2.0 * x[0]) + 2.0]])

    return ControlAffineModel(n=2, m=1, q=1, f=f, g=g, C=[[0.0, 1.0]],
                              box=box, name="example2state")


def linear_model(A, B, C=None, box=None) -> ControlAffineModel:
    """Linear dynamics xdot = A x + B u; bounds are exact by construction."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if B.ndim == 1:
        B = B.reshape(n, 1)
    m = B.shape[1]
    if C is None:
        C = np.eye(1, n)
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C.reshape(1, n)
    q = C.shape[0]
    if box is None:
        box = [(-2.0, 2.0)] * n
    bounds = JacobianBounds(Mf1=A.copy(), Mf2=A.copy(),
                            Mg1=np.zeros((n, n, m)), Mg2=np.zeros((n, n, m)))
    model = ControlAffineModel(n=n, m=m, q=q,
                               f=lambda x: A @ x, g=lambda x: B,
                               C=C, box=box, bounds=bounds, name="linear")
    return model


BUILTIN_MODELS = ("example2state", "linear")


def load_model(source) -> ControlAffineModel:
    """Build a model from a JSON file path, a dict, or a builtin name.

    Document schema::

        {"dynamics": "example2state" | "linear",
         "A": [[...]], "B": [[...]],        # linear only
         "C": [[...]],                      # optional override
         "box": [[lo, hi], ...],            # optional
         "bounds": {"Mf1": ..., "Mf2": ..., "Mg1": ..., "Mg2": ...},  # optional
         "derive_grid": 101}                # used when bounds are absent
    """
    if isinstance(source, str) and source in BUILTIN_MODELS:
        doc = {"dynamics": source}
    elif isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            doc = json.load(fh)
    kind = doc.get("dynamics")
    if kind == "example2state":
        model = example_two_state(box=doc.get("box", ((-2.0, 2.0), (-2.0, 2.0))))
        if "C" in doc:
            model = ControlAffineModel(model.n, model.m, model.q, model.f, model.g,
                                       doc["C"], model.box, name=model.name)
    elif kind == "linear":
        if "A" not in doc or "B" not in doc:
            raise ValueError("linear dynamics require matrices A and B")
        model = linear_model(doc["A"], doc["B"], C=doc.get("C"), box=doc.get("box"))
    else:
        raise ValueError(f"unknown dynamics identifier: {kind!r} "
                         f"(builtins: {', '.join(BUILTIN_MODELS)})")
    if "bounds" in doc:
        b = doc["bounds"]
        model = model.with_bounds(JacobianBounds(
            Mf1=b["Mf1"], Mf2=b["Mf2"], Mg1=b["Mg1"], Mg2=b["Mg2"]))
    elif model.bounds is None:
        model = model.with_bounds(model.derive_bounds(grid=doc.get("derive_grid", 101)))
    return model
