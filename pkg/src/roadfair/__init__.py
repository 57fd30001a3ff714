"""Locally fair classifiers trained against an adversary, with sample
reweighting (a ratio network or closed-form Boltzmann weights) that focuses
the fairness penalty on the regions where bias is largest."""

from .data import (Dataset, Standardizer, Subgroup, SubgroupSpec, SyntheticConfig, build_subgroups,
                   iterate_batches, load_csv, local_bias_config, split, standardize, synthesize)
from .errors import (ConfigurationError, NumericError, ParseError, RoadFairError, UndefinedMetricError,
                     UnsupportedError, UsageError)
from .harness import (ExperimentRecord, SweepSpec, drift_eval, emit_plotdata, evaluate, load_records,
                      pareto_report, run_sweep, subgroup_sensitivity)
from .metrics import (Predictions, RunReport, accuracy, build_report, eo_gap, global_di, local_di, pareto_front,
                      worst_k_di)
from .ratio import Normalization, RatioNetwork, broad_weights, normalize
from .trainers import (Algorithm, FairnessMode, TrainConfig, TrainedModel, load_model, save_model, train,
                       train_biased, train_broad, train_global_fair, train_road)

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ConfigurationError",
    "Dataset",
    "ExperimentRecord",
    "FairnessMode",
    "Normalization",
    "NumericError",
    "ParseError",
    "Predictions",
    "RatioNetwork",
    "RoadFairError",
    "RunReport",
    "Standardizer",
    "Subgroup",
    "SubgroupSpec",
    "SweepSpec",
    "SyntheticConfig",
    "TrainConfig",
    "TrainedModel",
    "UndefinedMetricError",
    "UnsupportedError",
    "UsageError",
    "accuracy",
    "broad_weights",
    "build_report",
    "build_subgroups",
    "drift_eval",
    "emit_plotdata",
    "eo_gap",
    "evaluate",
    "global_di",
    "iterate_batches",
    "load_csv",
    "load_model",
    "load_records",
    "local_bias_config",
    "local_di",
    "normalize",
    "pareto_front",
    "pareto_report",
    "run_sweep",
    "save_model",
    "split",
    "standardize",
    "subgroup_sensitivity",
    "synthesize",
    "train",
    "train_biased",
    "train_broad",
    "train_global_fair",
    "train_road",
    "worst_k_di",
]
