"""Semi-supervised confidence estimation from training consistency.

The package trains small dense classifiers while logging per-sample
prediction behavior across epochs, optimizes ranking losses that align the
maximum softmax output with training consistency, evaluates confidence
quality with risk-coverage and calibration metrics, and empirically checks
the bound tying the ranking loss to the AURC gap.
"""

from .active import ActiveConfig, StageResult, query, run_active
from .consistency import (
    ConsistencyLog,
    SurrogateScores,
    consistency,
    correctness,
    label_frequency_surrogates,
    minmax_normalize,
    minmax_normalize_groups,
    record_epoch,
)
from .datasets import SampleSet, load_csv, make_blobs, make_moons, make_ood, save_csv, split_semi
from .errors import ContractError, DataError, InsufficientHistoryError, MissingLabelError
from .losses import (
    LossWeights,
    PairedBatch,
    batch_ranking_loss,
    correctness_ranking_loss,
    cross_entropy,
    cyclic_ranking_loss,
    make_paired_batch,
    pairwise_ranking_loss,
    total_loss,
)
from .metrics import (
    EvaluatedSet,
    MetricsReport,
    RiskCoverageCurve,
    aurc,
    brier,
    e_aurc,
    ece,
    fpr_at_95_tpr,
    full_report,
    nll,
    ood_metrics,
    optimal_aurc,
    surrogate_quality_sweep,
)
from .numerics import (
    MlpModel,
    OptimizerState,
    backward,
    forward,
    init_model,
    init_optimizer,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    softmax,
)
from .pipeline import RunRecord, TrainConfig, evaluate, gap_experiment, train_semisupervised
from .theory import (
    BoundCertificate,
    RankingAssignment,
    align_consistency_ranking,
    certification_campaign,
    certify_bound,
    rank_scores,
    theorem_quantities,
)

__version__ = "0.1.0"
