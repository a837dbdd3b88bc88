"""Multi-robot moving-target convoying: constraint-based control, simulation,
and verification tooling.

Robots encode target-approaching and neighbor/obstacle collision-free subtasks
as inequality rows of a small per-robot quadratic program; the emergent convex
hull convoys the target with a spatial ordering that is discovered rather than
assigned.
"""

from .core import (ACTIVE, BROKEN, EPS_SING, EventSpec, Obstacle, RobotState,
                   ScenarioConfig, ScenarioError, TargetMotionSpec,
                   TargetState, ValidationReport, as_vec, inf_norm,
                   validate_scenario)
from .estimator import EstimatorState, estimator_step, hurwitz_check
from .metrics import (ConvoyReport, OrderingSequence, check_objectives,
                      convoy_error, lyapunov_value, ordering_sequence,
                      stationarity_residual)
from .qpsolver import (ConvoyQp, QpSolution, ResidualReport, closed_form_input,
                       feasible_seed, grid_oracle, kkt_residuals,
                       objective_value, solve)
from .simulator import (SimLog, SimState, SimulationError, UnicyclePose,
                        baseline_gradient_step, nid_transform, run, sim_step,
                        target_velocity, unicycle_step)
from .subtasks import (ConstraintRow, SingularityError, SubtaskEval,
                       assemble_constraints, eval_neighbor_subtask,
                       eval_obstacle_subtask, eval_target_subtask, gamma1,
                       gamma2, neighbor_set)

__version__ = "0.1.0"

__all__ = [
    "ACTIVE", "BROKEN", "EPS_SING",
    "ConstraintRow", "ConvoyQp", "ConvoyReport", "EstimatorState", "EventSpec",
    "Obstacle", "OrderingSequence", "QpSolution", "ResidualReport",
    "RobotState", "ScenarioConfig", "ScenarioError", "SimLog", "SimState",
    "SimulationError", "SingularityError", "SubtaskEval", "TargetMotionSpec",
    "TargetState", "UnicyclePose", "ValidationReport",
    "as_vec", "assemble_constraints", "baseline_gradient_step",
    "check_objectives", "closed_form_input", "convoy_error",
    "estimator_step", "eval_neighbor_subtask", "eval_obstacle_subtask",
    "eval_target_subtask", "feasible_seed", "gamma1", "gamma2", "grid_oracle",
    "hurwitz_check", "inf_norm", "kkt_residuals", "lyapunov_value",
    "neighbor_set", "nid_transform", "objective_value", "ordering_sequence",
    "run", "sim_step", "solve", "stationarity_residual", "target_velocity",
    "unicycle_step", "validate_scenario",
]
