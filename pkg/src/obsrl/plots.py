"""Figure rendering for simulation traces.

Renders the standard diagnostic figures (states vs estimates, estimation
error, critic weights, control effort) to PNG files next to the CSV output.
Uses the non-interactive Agg backend so it works headless.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sim import SimTrace  # noqa: E402


def render_trace_figures(trace: SimTrace, out_dir: str, dpi: int = 120) -> dict:
    """Write the four standard figures; returns {figure name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    n = trace.x.shape[1]
    m = trace.u.shape[1]
    L = trace.Wc.shape[1]

    fig, axes = plt.subplots(n, 1, figsize=(7, 2.4 * n), sharex=True)
    axes = [axes] if n == 1 else list(axes)
    for i, ax in enumerate(axes):
        ax.plot(trace.t, trace.x[:, i], label=f"x{i+1}")
        ax.plot(trace.t, trace.xhat[:, i], "--", label=f"xhat{i+1}")
        ax.set_ylabel(f"x{i+1}")
        ax.legend(loc="best", fontsize=8)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("t [s]")
    fig.suptitle("states and estimates")
    paths["states"] = _save(fig, out_dir, "states.png", dpi)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for i in range(n):
        ax1.plot(trace.t, trace.e[:, i], label=f"e{i+1}")
    ax1.set_ylabel("estimation error")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(alpha=0.3)
    ax2.semilogy(trace.t, trace.Ve.clip(min=1e-300))
    ax2.set_ylabel("error energy e'Pe")
    ax2.set_xlabel("t [s]")
    ax2.grid(alpha=0.3)
    fig.suptitle("observer error")
    paths["error"] = _save(fig, out_dir, "error.png", dpi)

    fig, ax = plt.subplots(figsize=(7, 3.5))
    for i in range(L):
        ax.plot(trace.t, trace.Wc[:, i], label=f"Wc{i+1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("critic weights")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    fig.suptitle("critic weights")
    paths["weights"] = _save(fig, out_dir, "weights.png", dpi)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for k in range(m):
        ax1.plot(trace.t, trace.u[:, k], label=f"u{k+1}")
    ax1.set_ylabel("control")
    ax1.legend(loc="best", fontsize=8)
    ax1.grid(alpha=0.3)
    ax2.plot(trace.t, trace.J)
    ax2.set_ylabel("accumulated cost J")
    ax2.set_xlabel("t [s]")
    ax2.grid(alpha=0.3)
    fig.suptitle("control and cost")
    paths["control"] = _save(fig, out_dir, "control.png", dpi)
    return paths


def _save(fig, out_dir, name, dpi):
    path = os.path.join(out_dir, name)
    fig.savefig(path, dpi=dpi, bbox_inches="tight")
    plt.close(fig)
    return path
