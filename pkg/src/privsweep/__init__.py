"""privsweep: train classifiers under noise-based privacy mechanisms, attack
them with membership inference, and chart the utility/privacy trade-off."""

from .attack import (
    AttackOutcome,
    ShadowEnsemble,
    attack_features,
    build_attack_set,
    evaluate_attack,
    fit_attack_forest,
    train_shadows,
)
from .dataset import (
    Dataset,
    SplitPlan,
    SyntheticSpec,
    load_csv,
    make_split,
    normalize_rows_to_unit_ball,
    save_csv,
    synthesize,
)
from .errors import (
    ConfigurationError,
    EmptyReportError,
    FormatError,
    InfeasibleParametersError,
    IngestionError,
    NumericalError,
    ParameterError,
    PrivsweepError,
    ShapeError,
    TrainingError,
    UndefinedMetricError,
)
from .forest import RandomForest
from .harness import (
    ExperimentConfig,
    MetricRow,
    SweepResult,
    config_from_json,
    load_config,
    read_results,
    run_sweep,
    write_results,
)
from .learners import (
    Model,
    ModelArch,
    TrainConfig,
    evaluate,
    load_model,
    lr_arch,
    mlp_arch,
    predict_proba,
    save_model,
    train,
)
from .mechanisms import (
    MechanismSpec,
    PrivacyBudget,
    PrivateModel,
    build_private_model,
    default_delta,
    gradient_perturb_dpsgd,
    gradient_perturb_lr,
    input_perturb_lr,
    input_perturb_mlp,
    objective_perturb,
    output_perturb,
    prediction_perturb,
)
from .metrics import privacy_leakage, true_revealed, utility_loss

__version__ = "0.1.0"

__all__ = [
    "AttackOutcome",
    "ConfigurationError",
    "Dataset",
    "EmptyReportError",
    "ExperimentConfig",
    "FormatError",
    "InfeasibleParametersError",
    "IngestionError",
    "MechanismSpec",
    "MetricRow",
    "Model",
    "ModelArch",
    "NumericalError",
    "ParameterError",
    "PrivacyBudget",
    "PrivateModel",
    "PrivsweepError",
    "RandomForest",
    "ShadowEnsemble",
    "ShapeError",
    "SplitPlan",
    "SweepResult",
    "SyntheticSpec",
    "TrainConfig",
    "TrainingError",
    "UndefinedMetricError",
    "attack_features",
    "build_attack_set",
    "build_private_model",
    "config_from_json",
    "default_delta",
    "evaluate",
    "evaluate_attack",
    "fit_attack_forest",
    "gradient_perturb_dpsgd",
    "gradient_perturb_lr",
    "input_perturb_lr",
    "input_perturb_mlp",
    "load_config",
    "load_csv",
    "load_model",
    "lr_arch",
    "make_split",
    "mlp_arch",
    "normalize_rows_to_unit_ball",
    "objective_perturb",
    "output_perturb",
    "prediction_perturb",
    "predict_proba",
    "privacy_leakage",
    "read_results",
    "run_sweep",
    "save_csv",
    "save_model",
    "synthesize",
    "train",
    "train_shadows",
    "true_revealed",
    "utility_loss",
    "write_results",
]
