"""Treatment-effect estimation for longitudinal outcomes truncated by death.

The package covers the full loop: simulate rank-preserving trial data with
known ground truth, fit a two-step Bayesian model (piecewise-exponential
survival, then a stratum-weighted longitudinal regression), compute four
causal estimands per posterior draw (always-survivor contrast, pairwise
comparison, survival-incorporated median, restricted-mean survival time),
and score bias and coverage across replicated scenarios.
"""

from .estimators import (
    CompositeDiffDistribution,
    EstimandDraws,
    EstimandSummary,
    composite_diff_dist,
    estimand_draws,
    naive_effect,
    pc_draw,
    rmst_draw,
    sace_draw,
    sim_draw,
    summarize,
    wmw,
)
from .longitudinal import (
    LongitudinalPosterior,
    LongParams,
    LongPriors,
    compute_weights,
    fit_longitudinal,
    predict_y_mis,
    weighted_loglik,
)
from .mcmc import Block, McmcConfig, McmcResult, ModelSpec, ess, rhat, run_chains
from .metrics import (
    BiasCoverage,
    ReplicateMetrics,
    bias_and_coverage,
    brier_scores,
    cdauc,
    ibs,
    km_survival,
    mae_reconstruction,
)
from .science import (
    CompositeOutcome,
    InvariantError,
    ObservedDataset,
    ObservedPatient,
    PatientTruth,
    ScienceTable,
    Stratum,
    classify_stratum,
    composite_metric,
    composite_order,
    observed_composite,
    potential_composite,
)
from .simulate import (
    ScenarioParams,
    TruthRecord,
    child_seed,
    extended_median,
    get_scenario,
    load_scenarios,
    observe,
    simulate_science_table,
    true_estimands,
    weibull_quantile,
)
from .study import StudyConfig, StudyResults, build_config, emit_report, run_cell, run_study
from .survival import (
    HazardGrid,
    SurvivalParams,
    SurvivalPosterior,
    SurvivalPriors,
    default_grid,
    fit_survival,
    poisson_expand,
    predict_s_mis,
    rmst_integral,
    survival_loglik,
    survival_prob,
)

__version__ = "0.1.0"
