"""Detection and mitigation of systematic label noise in code ranking.

The package trains per-code text rankers, measures how their ranking
quality changes between originally assigned and expert-validated label
sets, mines the codes that systematically stand in for each other, and
retrains with confusion-aware supervision to recover ranking quality on
the validated labels.
"""

from .confusion import ConfusionMap, RankedInstance, rank_instances, select_confusion_codes
from .corpus import (
    Dataset,
    Note,
    SynthConfig,
    generate_synthetic,
    label_set,
    load_corpus,
    save_corpus,
    split_stats,
)
from .errors import CodenoiseError, DataError
from .evaluation import (
    BUCKET_LABELS,
    CodeEval,
    EvalReport,
    average_precision,
    build_report,
    fixed_oracle_ap,
    fixed_oracle_score,
    load_report,
    mean_average_precision,
    oracle_ap,
    oracle_scores,
    paired_significance,
    score_change_buckets,
    tie_shuffled_ap,
    top_k_report,
)
from .experiments import (
    METHOD_NAMES,
    ExperimentConfig,
    ExperimentResult,
    FeatureConfig,
    TableRow,
    config_from_dict,
    config_hash,
    config_to_dict,
    method_table,
    render_table_tsv,
    run_experiment,
    run_from_manifest,
    write_outputs,
)
from .features import SparseVector, Vocabulary, build_vocab, featurize, featurize_matrix, tokenize
from .hierarchy import (
    DifferenceLevel,
    IcdCode,
    common_prefix_len,
    difference_level,
    is_wastebasket,
    parse_code,
    same_chapter,
)
from .models import (
    LinearModel,
    MlpModel,
    TrainConfig,
    derive_seed,
    fine_tune,
    load_model,
    loss_and_gradient,
    predict_prob,
    predict_prob_batch,
    save_model,
    train_binary_lr,
    train_many_binary,
    train_mlp_br,
    train_multiclass_lr,
)
from .noise_analysis import (
    DisagreementCategory,
    agreement_rate,
    categorize,
    disagreement_distribution,
    replacement_prefix_breakdown,
)
from .supervision import (
    ThreeClass,
    map_to_three_class,
    mlp_br_labels,
    modified_label,
    proposed_score_batch,
    three_class_array,
)

__version__ = "0.1.0"

__all__ = [
    "BUCKET_LABELS",
    "CodeEval",
    "CodenoiseError",
    "ConfusionMap",
    "DataError",
    "Dataset",
    "DifferenceLevel",
    "DisagreementCategory",
    "EvalReport",
    "ExperimentConfig",
    "ExperimentResult",
    "FeatureConfig",
    "IcdCode",
    "LinearModel",
    "METHOD_NAMES",
    "MlpModel",
    "Note",
    "RankedInstance",
    "SparseVector",
    "SynthConfig",
    "TableRow",
    "ThreeClass",
    "TrainConfig",
    "Vocabulary",
    "agreement_rate",
    "average_precision",
    "build_report",
    "build_vocab",
    "categorize",
    "common_prefix_len",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "derive_seed",
    "difference_level",
    "disagreement_distribution",
    "featurize",
    "featurize_matrix",
    "fine_tune",
    "fixed_oracle_ap",
    "fixed_oracle_score",
    "generate_synthetic",
    "is_wastebasket",
    "label_set",
    "load_corpus",
    "load_model",
    "load_report",
    "loss_and_gradient",
    "map_to_three_class",
    "mean_average_precision",
    "method_table",
    "mlp_br_labels",
    "modified_label",
    "oracle_ap",
    "oracle_scores",
    "paired_significance",
    "parse_code",
    "predict_prob",
    "predict_prob_batch",
    "proposed_score_batch",
    "rank_instances",
    "render_table_tsv",
    "replacement_prefix_breakdown",
    "run_experiment",
    "run_from_manifest",
    "same_chapter",
    "save_corpus",
    "save_model",
    "score_change_buckets",
    "select_confusion_codes",
    "split_stats",
    "three_class_array",
    "tie_shuffled_ap",
    "tokenize",
    "top_k_report",
    "train_binary_lr",
    "train_many_binary",
    "train_mlp_br",
    "train_multiclass_lr",
    "write_outputs",
    "__version__",
]
