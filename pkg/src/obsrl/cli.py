"""Command-line interface.

Subcommands:
  synthesize         solve the observer-gain feasibility problem for a model
  verify             sample-based sector/decay verification of saved gains
  simulate           run a closed-loop simulation from a JSON config
  reproduce-example  run the built-in two-state benchmark end to end

Exit codes: 0 success, 1 verification failure, 2 infeasible synthesis,
3 divergence, 4 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import sim
from .model import EvaluationError, load_model
from .sdp import dump_constraints
from .synthesis import (ConditioningError, ObserverGains, SynthesisError,
                        assemble_lmi, evaluate_gains_in_lmi,
                        saturation_vertices, synthesize, verify_decay,
                        verify_sector)

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGENCE = 3
EXIT_CONFIG = 4


def _model_with_bounds(source):
    model = load_model(source)
    if model.bounds is None:
        model = model.with_bounds(model.derive_bounds())
    return model


def _parse_vertices(spec: str, lambda_bar: float, m: int):
    """Vertex list from a CLI string: "corners", "zero", or "v1,v2;v3,v4"."""
    spec = spec.strip()
    if spec == "corners":
        return saturation_vertices(lambda_bar, m)
    if spec == "zero":
        return [np.zeros(m)]
    verts = []
    for chunk in spec.split(";"):
        v = np.array([float(tok) for tok in chunk.split(",")])
        if v.size != m:
            raise ValueError(f"vertex {chunk!r} has {v.size} components, expected {m}")
        verts.append(v)
    return verts


def cmd_synthesize(args) -> int:
    try:
        model = _model_with_bounds(args.model)
        vertices = _parse_vertices(args.vertices, args.lambda_bar, model.m)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_constraints:
        constraints, _ = assemble_lmi(model, args.alpha, vertices, args.eps_p)
        for path in dump_constraints(constraints, args.dump_constraints):
            print(f"wrote {path}")
    try:
        gains = synthesize(model, args.alpha, vertices, eps_p=args.eps_p,
                           tol=args.tol)
    except (SynthesisError, ConditioningError) as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    gains.to_json(args.out)
    print(f"feasible; gains written to {args.out}")
    print(f"  L = {gains.L.ravel().tolist()}")
    print(f"  H = {gains.H.ravel().tolist()}  K = {gains.K.ravel().tolist()}")
    print(f"  direct margins per vertex: {gains.direct_margins}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        model = _model_with_bounds(args.model)
        gains = ObserverGains.from_json(args.gains)
    except (ValueError, OSError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sector = verify_sector(model, gains, args.samples,
                           lambda_bar=args.lambda_bar, seed=args.seed)
    decay = verify_decay(model, gains, args.samples,
                         lambda_bar=args.lambda_bar, seed=args.seed)
    lmi = evaluate_gains_in_lmi(model, gains, gains.u_vertices or
                                [np.zeros(model.m)])
    print(f"sector: {sector.n_samples} samples, {sector.n_skipped} skipped, "
          f"{sector.quad_violations} quadratic-form violations "
          f"(worst f {sector.worst_quad_f:.3e}, g {sector.worst_quad_g:.3e}), "
          f"{sector.hull_violations} hull violations "
          f"(worst {sector.worst_hull:.3e})")
    print(f"decay: {decay.violations} violations "
          f"(worst slack {decay.worst_slack:.3e})")
    for entry in lmi:
        print(f"constraint {entry['label']}: {entry['sense']} extreme "
              f"eigenvalue {entry['extreme_eig']:.6e}")
    ok = sector.ok and decay.ok
    print("verification:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY_FAIL


def _finish_run(cfg, out_dir, make_plots) -> int:
    trace = sim.run(cfg)
    paths = sim.export(trace, out_dir)
    print(f"wrote {paths['trace']}")
    print(f"wrote {paths['summary']}")
    if make_plots:
        from .plots import render_trace_figures
        for name, path in render_trace_figures(trace, out_dir).items():
            print(f"wrote {path}")
    summary = trace.summary()
    print(json.dumps(summary, indent=2))
    if trace.reason != "completed":
        print(f"run terminated early: {trace.reason}", file=sys.stderr)
        return EXIT_DIVERGENCE
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = sim.SimConfig.from_json(args.config)
    except (sim.ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _finish_run(cfg, args.out_dir, not args.no_plots)


def cmd_reproduce_example(args) -> int:
    model = _model_with_bounds("example2state")
    try:
        gains = synthesize(model, args.alpha, [np.zeros(model.m)])
    except (SynthesisError, ConditioningError) as exc:
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    os.makedirs(args.out_dir, exist_ok=True)
    gains.to_json(os.path.join(args.out_dir, "gains.json"))
    print(f"wrote {os.path.join(args.out_dir, 'gains.json')}")
    try:
        cfg = sim.reproduce_example_config(gains, h=args.step, T=args.horizon)
    except sim.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _finish_run(cfg, args.out_dir, not args.no_plots)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obsrl",
        description="Observer synthesis and saturated critic-only RL toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="solve for observer gains")
    p.add_argument("--model", required=True,
                   help="model JSON file or builtin name (example2state, linear)")
    p.add_argument("--alpha", type=float, default=2.0,
                   help="required exponential decay rate")
    p.add_argument("--out", default="gains.json", help="output gains file")
    p.add_argument("--eps-p", type=float, default=1e-6, dest="eps_p")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--vertices", default="corners",
                   help='input vertices: "corners", "zero", or "v1,..;v2,.."')
    p.add_argument("--lambda-bar", type=float, default=3.0, dest="lambda_bar")
    p.add_argument("--dump-constraints", default=None, metavar="DIR",
                   help="also dump constraint matrices as CSV to DIR")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("verify", help="sample-based verification of gains")
    p.add_argument("--model", required=True)
    p.add_argument("--gains", required=True, help="gains JSON file")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--lambda-bar", type=float, default=3.0, dest="lambda_bar")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="closed-loop run from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="sim_out", dest="out_dir")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce-example",
                       help="run the built-in two-state benchmark")
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--horizon", type=float, default=50.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--out-dir", default="example_out", dest="out_dir")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_reproduce_example)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EvaluationError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
