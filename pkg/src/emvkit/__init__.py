"""emvkit: Exogenous / Maturity / Vintage decomposition of credit portfolio panels.

Fit the additive EMV (age-period-cohort) model on vintage-aggregated data,
resolve the structural drift ambiguity with explicit post-hoc constraints,
compare against macro-driven semiparametric fits, re-estimate vintages as
random effects, and forecast - with a CLI and an HTTP service for the
interactive constraint explorer.
"""

from .panel import (
    PanelError,
    PanelGrid,
    ResponseTransform,
    load_panel,
    vintage_of,
    transform_response,
    grid_to_csv,
    grid_to_json,
    grid_to_records,
)
from .design import DesignError, EmvDesign, ParameterLayout, build_design, null_vector, null_space_report
from .estimator import (
    EstimationError,
    NonEstimableError,
    FitResult,
    fit_linear,
    fit_glm,
    estimable_se,
    fit_to_json,
    fit_from_json,
)
from .identify import (
    ConstraintError,
    ConstraintSpec,
    Decomposition,
    apply_constraint,
    apply_constraint_to_vector,
    intrinsic,
    constraint_sweep,
    drift_report,
    decomposition_to_json,
    decomposition_to_csv,
)
from .macro import (
    MacroError,
    MacroPanel,
    SemiparametricFit,
    load_macro,
    fit_semiparametric,
    comparable_nonparametric,
)
from .vintage_effects import (
    VintageProcess,
    RandomEffectsFit,
    fit_random_effects,
    predict_new_vintages,
)
from .frailty import FrailtyError, FrailtyScenario, FrailtyCurves, simulate_vintage_hazard
from .forecast import ForecastError, ForecastSpec, ForecastResult, forecast, extrapolate_maturity
from .synth import (
    GeneratorError,
    GeneratorSpec,
    MaturityShape,
    ExogenousSource,
    VintageSource,
    SyntheticPanel,
    generate,
)

__version__ = "0.1.0"
