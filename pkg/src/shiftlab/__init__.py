"""shiftlab: imbalanced-group distribution shift at desk scale.

Exact piecewise-linear densities and information distances, hard synthetic
instance families for label shift and group-covariate shift, undersampling
and binning estimators with a scikit-learn interface, exact risk evaluation,
and a reproducible Monte Carlo harness for convergence-rate experiments.
"""

__version__ = "0.1.0"

from .estimators import (
    FamilyPosterior,
    FullBinningClassifier,
    HistogramDensityPair,
    HistogramPluginClassifier,
    InsufficientDataError,
    PosteriorOracleClassifier,
    UndersampledBinningClassifier,
    WeightedBinningClassifier,
    WrongScenarioError,
    ceil_cube_root,
    compute_family_posterior,
    cube_root_bins,
    posterior_oracle_classifier,
)
from .harness import (
    ESTIMATOR_NAMES,
    ExperimentConfig,
    LemmaReport,
    RateFit,
    RateUndefinedError,
    SweepConfig,
    TrialRecord,
    fit_rate,
    minority_majority_sweep,
    run_experiment,
    verify_lemmas,
)
from .instances import (
    GROUP_SHIFT,
    LABEL_SHIFT,
    MAJORITY,
    MINORITY,
    Dataset,
    GroupShiftIndex,
    LabelShiftIndex,
    Sample,
    ShiftInstance,
    draw_dataset,
    group_shift_instance,
    label_shift_instance,
    make_group_shift_hard,
    make_label_shift_hard,
    random_index,
    undersample,
)
from .piecewise import (
    Density,
    InvalidDensityError,
    LipschitzCertificate,
    PiecewiseConstantClassifier,
    PiecewiseLinearFn,
    hat_function,
    integrate,
    integrate_abs,
    integrate_product,
    kl_divergence,
    kl_integral,
    lipschitz_constant,
    overlap,
    tv_distance,
)
from .risk import (
    RiskConsistencyError,
    RiskReport,
    bayes_risk,
    excess_risk,
    intermediate_lower_bound_label_shift,
    lower_bound_group_shift,
    lower_bound_group_shift_secondary,
    lower_bound_label_shift,
    per_interval_excess,
    risk,
)

__all__ = [name for name in dir() if not name.startswith("_")]
