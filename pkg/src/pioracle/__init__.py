"""Oracle permutation-invariant decision rules for exchangeable Gaussian sequences."""
from .kernels import BACKEND
from .losses import (
    MINUS, NA, PLUS, ConfusionCounts, Estimate, GlobalTest, MultiTest, SelectionRule, SignClassify,
    dir_fdp, dir_fnp, fdp, fnp, global_loss, selective_sq_loss, sign_counts, testing_counts,
)
from .model import (
    DataVector, DimensionError, ParamVector, Permutation, apply_permutation, compose, log_likelihood,
    sample_data,
)
from .oracles import (
    BisectionConfig, EstimationOracle, GlobalTestOracle, InfeasibleConstraintWarning, LagrangianOracle,
    calibrate_global, calibrate_lambda, global_decide, lr_statistic, mt_rule_at_lambda, selective_estimate,
    sign_rule_at_lambda,
)
from .permutation_engine import (
    CapacityError, PermutationEnsemble, WeightedPosterior, enumerate_exact, posterior_weights, sample_ensemble,
)
from .posterior import NullSet, PosteriorSummary, marginal_log_density, summarize, summarize_batch, summarize_data
from .risk import (
    RiskReport, baseline_rules, build_oracle, estimate_risk, mc_upper_approx, paired_difference,
    subset_lower_bound,
)
from .simple_rule import EmpiricalPrior, gap_estimate, simple_posterior, simple_summary

__version__ = "0.1.0"
