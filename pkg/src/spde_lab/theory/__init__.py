"""Closed-form oracles, threshold tests and classifiers."""

from .classify import (
    ChowReport,
    ConditionBranch,
    FujitaClass,
    chow_conditions_check,
    fujita_classify,
    whole_space_noise_classify,
)
from .concavity import (
    ConcavityCertificate,
    ConcavityTrace,
    concavity_certificate,
    concavity_monitor,
    concavity_monitor_scan,
    second_derivative_series,
)
from .inequalities import GlobalCondition, InterpolationCoeffs, eps_moment_global_condition, interpolation_coeffs
from .kaplan import (
    BlowupTimeBound,
    KaplanParams,
    KaplanTrajectory,
    blowup_time_bound,
    closed_form_blowup_time,
    eigen_moment_threshold,
    eps_moment_rate,
    eps_moment_threshold,
    kaplan_ode_solve,
    labeled_blowup_bounds,
)
from .mollifier import BetaEps, beta_eps, beta_second_derivative_sup, c_hat, mollifier_constant, rho_eps
from .reports import ThresholdReport, Verdict, jsonable
from .whole_space import (
    GrowthRecursionFit,
    SupersolutionReport,
    expectation_supersolution_check,
    growth_recursion_fit,
    kernel_weighted_moment,
)
