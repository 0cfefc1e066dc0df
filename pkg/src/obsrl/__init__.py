"""Observer synthesis and saturated critic-only reinforcement learning.

Pipeline: describe a control-affine model with element-wise Jacobian bounds,
synthesize a three-term state observer by semidefinite feasibility, couple
it to a critic-only learner with a tanh-saturated policy, and simulate the
closed loop with certificate and property reports.
"""

from .model import (ControlAffineModel, EvaluationError, JacobianBounds,
                    example_two_state, linear_model, load_model)
from .synthesis import (ObserverGains, SynthesisError, synthesize,
                        verify_decay, verify_sector)
from .critic import (BasisSpec, CostSpec, CriticState, LearnerGains,
                     bellman_error, control_penalty, critic_derivatives,
                     pe_metric, policy)
from .runtime import error_energy, observer_rhs
from .sim import SimConfig, SimTrace, export, run

__all__ = [
    "ControlAffineModel", "EvaluationError", "JacobianBounds",
    "example_two_state", "linear_model", "load_model",
    "ObserverGains", "SynthesisError", "synthesize",
    "verify_decay", "verify_sector",
    "BasisSpec", "CostSpec", "CriticState", "LearnerGains",
    "bellman_error", "control_penalty", "critic_derivatives",
    "pe_metric", "policy",
    "error_energy", "observer_rhs",
    "SimConfig", "SimTrace", "export", "run",
]

__version__ = "0.1.0"
