"""Analytic gradients, the training objective and the fitting loop."""

from .fit import EpochMetrics, FitResult, HISTORY_COLUMNS, fit, initial_parameters, training_instance
from .gradcheck import GradCheckReport, build_gradcheck_instance, finite_difference_check, run_gradcheck
from .gradients import FAMILIES, ModelParameters, ParameterGradients, backward
from .objective import (
    ObjectiveBreakdown,
    ObjectiveTerms,
    TrainingInstance,
    breakdown_difference,
    evaluate,
    objective_and_grad,
    objective_breakdown,
    objective_grad_output,
)

__all__ = [
    "EpochMetrics",
    "FAMILIES",
    "FitResult",
    "GradCheckReport",
    "HISTORY_COLUMNS",
    "ModelParameters",
    "ObjectiveBreakdown",
    "ObjectiveTerms",
    "ParameterGradients",
    "TrainingInstance",
    "backward",
    "breakdown_difference",
    "build_gradcheck_instance",
    "evaluate",
    "finite_difference_check",
    "fit",
    "initial_parameters",
    "objective_and_grad",
    "objective_breakdown",
    "objective_grad_output",
    "run_gradcheck",
    "training_instance",
]
