"""Population-adjusted cure-rate and survival estimation from historical controls."""

__version__ = "0.1.0"

from .calibration import (
                          EntropyDualProblem,
                          OutcomeModelFit,
                          fit_pseudo_logistic,
                          ipw_weights,
                          ma_balance_design,
                          maic_ma_design,
                          maic_weights,
                          solve_entropy_weights,
)
from .cohort import (
                          Cohort,
                          CohortSchema,
                          CovariateTarget,
                          SubjectRecord,
                          covariate_target,
                          load_cohort,
)
from .errors import (
                          BoundaryError,
                          ConvergenceError,
                          CureWeightError,
                          DesignError,
                          EstimationError,
                          FeasibilityError,
                          InferenceError,
                          JackknifeError,
                          ParseError,
                          SchemaError,
                          ValidationError,
                          WeightOverflowError,
)
from .estimators import (
                          CureRateEstimate,
                          estimate_cure_direct,
                          estimate_cure_km,
                          estimate_cure_po,
                          estimate_cure_pol,
                          estimate_survival_km,
                          estimate_survival_po,
)
from .inference import (
                          BootstrapSpec,
                          IntervalEstimate,
                          TransformScale,
                          bootstrap_estimate,
)
from .pipeline import Pipeline, build_weights
from .pseudo import PseudoObservations, pseudo_cure, pseudo_survival
from .survival import (
                          SurvivalCurve,
                          WeightSet,
                          kaplan_meier,
                          plateau_diagnostic,
                          uniform_weights,
                          weighted_kaplan_meier,
)

__all__ = [
    "EntropyDualProblem", "OutcomeModelFit", "fit_pseudo_logistic", "ipw_weights",
    "ma_balance_design", "maic_ma_design", "maic_weights", "solve_entropy_weights", "Cohort",
    "CohortSchema", "CovariateTarget", "SubjectRecord", "covariate_target", "load_cohort",
    "BoundaryError", "ConvergenceError", "CureWeightError", "DesignError", "EstimationError",
    "FeasibilityError", "InferenceError", "JackknifeError", "ParseError", "SchemaError",
    "ValidationError", "WeightOverflowError", "CureRateEstimate", "estimate_cure_direct",
    "estimate_cure_km", "estimate_cure_po", "estimate_cure_pol", "estimate_survival_km",
    "estimate_survival_po", "BootstrapSpec", "IntervalEstimate", "TransformScale",
    "bootstrap_estimate", "Pipeline", "build_weights", "PseudoObservations", "pseudo_cure",
    "pseudo_survival", "SurvivalCurve", "WeightSet", "kaplan_meier", "plateau_diagnostic",
    "uniform_weights", "weighted_kaplan_meier",
]
