"""Sampling plans for estimating the proportion of a finite population."""

from ._backend import BACKEND
from .bounds import AbsRelMargins, Q, RelMargin, g, hoeffding_lower, hoeffding_upper, script_H, script_M
from .errors import AdmissibilityError, CertificationError, EnumerationCapError, ParameterDomainError
from .fixed_size import (
    exact_min_sample_size,
    exact_mixed_coverage,
    plan_fixed_size,
    sample_size_formula,
)
from .hypergeom import EvalMode, PopulationSpec, lower_tail, pmf, stage_transition, upper_tail
from .inverse import (
    exact_relerr_coverage,
    plan_inverse,
    simulate_inverse,
    solve_r_star,
    threshold_formula,
)
from .multistage import (
    StagePlan,
    build_stage_plan,
    coverage_report,
    limit_L,
    limit_U,
    run_multistage,
    stopping_distribution,
    tune_zeta,
    verify_2D2,
)

__version__ = "0.1.0"
