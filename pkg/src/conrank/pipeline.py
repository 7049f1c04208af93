"""Semi-supervised training loop wiring the network, the prediction log and
the ranking losses together, plus evaluation and the ranking-gap experiment.

Each optimization step sees a joint batch: a slice of labeled rows (cycled
so no labeled sample is skipped or repeated within a pass) plus a slice of
unlabeled rows. Consistency targets enter after two recorded epochs,
correctness targets after one; both are min-max normalized per group within
the batch before the ranking losses see them. At the end of every epoch the
model predicts the whole training set once and the log is updated.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import consistency as cons
from . import losses, metrics, numerics
from .datasets import SampleSet
from .errors import ContractError, MissingLabelError

DEFAULT_HIDDEN = (32, 32)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    labeled_batch: int = 32
    unlabeled_batch: int = 64
    weights: losses.LossWeights = field(default_factory=losses.LossWeights)
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    activation: str = "relu"
    lr_schedule: tuple[tuple[int, float], ...] = numerics.DEFAULT_LR_SCHEDULE
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    record_consistency: bool = True
    warmup_epochs: int = 0
    record_history: bool = False
    n_bins: int = metrics.DEFAULT_ECE_BINS

    def validate(self) -> None:
        if self.epochs < 1:
            raise ContractError("epochs must be >= 1")
        ranking_on = self.weights.correctness > 0.0 or self.weights.consistency > 0.0
        if ranking_on and self.labeled_batch < 2:
            raise ContractError("ranking losses need labeled_batch >= 2")
        if self.weights.consistency > 0.0 and self.unlabeled_batch < 2:
            raise ContractError("the consistency term needs unlabeled_batch >= 2")
        if self.weights.consistency > 0.0 and self.record_consistency and self.epochs < 2:
            raise ContractError("consistency targets need at least 2 epochs")
        if self.warmup_epochs < 0:
            raise ContractError("warmup_epochs must be nonnegative")


@dataclass
class RunRecord:
    """Everything a finished training run produced."""

    model: numerics.MlpModel
    loss_history: list[dict]
    log: cons.ConsistencyLog
    train_unlabeled_report: metrics.MetricsReport | None
    test_report: metrics.MetricsReport | None
    prediction_history: np.ndarray | None = None
    confidence_history: np.ndarray | None = None


class _LabeledCycler:
    """Yields consecutive slices of a labeled permutation, reshuffling when
    a pass completes; tail slices may be short but nothing is skipped."""

    def __init__(self, ids: np.ndarray, batch: int, rng: np.random.Generator):
        self._ids = ids
        self._batch = min(batch, ids.size)
        self._rng = rng
        self._perm = rng.permutation(ids)
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._pos >= self._perm.size:
            self._perm = self._rng.permutation(self._ids)
            self._pos = 0
        out = self._perm[self._pos : self._pos + self._batch]
        self._pos += out.size
        return out


def _model_predictions(model: numerics.MlpModel, features: np.ndarray):
    logits, _ = numerics.forward(model, features)
    probs = numerics.softmax(logits)
    return probs.argmax(axis=1), probs


def train_semisupervised(
    config: TrainConfig, train: SampleSet, test: SampleSet | None = None
) -> RunRecord:
    """Run the full training loop and return the resulting record.

    The trainer only ever reads mask-visible labels. The train-unlabeled
    metrics report uses the set's oracle labels and is None when some
    unlabeled row has no oracle label (e.g. data loaded from a partially
    labeled CSV).
    """
    config.validate()
    visible = train.training_labels()
    labeled_ids = np.flatnonzero(train.labeled_mask)
    unlabeled_ids = np.flatnonzero(~train.labeled_mask)
    if labeled_ids.size == 0:
        raise ContractError("training needs at least one labeled row")
    if config.weights.consistency > 0.0 and unlabeled_ids.size == 0:
        raise ContractError("the consistency term needs unlabeled rows")
    n_classes = int(visible[labeled_ids].max()) + 1
    if train.labels.max() >= 0:
        n_classes = max(n_classes, int(train.labels.max()) + 1)

    rng = np.random.default_rng(config.seed)
    model = numerics.init_model(
        [train.dim, *config.hidden, n_classes], activation=config.activation, seed=config.seed
    )
    state = numerics.init_optimizer(
        model,
        lr_schedule=config.lr_schedule,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )
    log = cons.ConsistencyLog.for_samples(train.m, n_classes, labels=visible)
    cycler = _LabeledCycler(labeled_ids, config.labeled_batch, rng)

    loss_history = []
    pred_history = [] if config.record_history else None
    conf_history = [] if config.record_history else None

    for epoch in range(1, config.epochs + 1):
        epochs_seen = log.epochs_recorded
        use_corr = config.weights.correctness > 0.0 and epochs_seen >= 1
        use_cons = (
            config.weights.consistency > 0.0
            and epochs_seen >= 2
            and unlabeled_ids.size > 0
        )
        cons_all = cons.consistency(log).values if use_cons else None
        corr_labeled = cons.correctness(log, sample_ids=labeled_ids).values if use_corr else None
        labeled_slot = {int(s): j for j, s in enumerate(labeled_ids)}

        sums = {"total": 0.0, "cross_entropy": 0.0, "correctness": 0.0, "consistency": 0.0}
        steps = 0
        unlabeled_perm = rng.permutation(unlabeled_ids)
        n_chunks = max(1, int(np.ceil(unlabeled_perm.size / config.unlabeled_batch)))
        for chunk in range(n_chunks):
            unl = unlabeled_perm[
                chunk * config.unlabeled_batch : (chunk + 1) * config.unlabeled_batch
            ]
            lab = cycler.next_batch()
            batch_ids = np.concatenate([lab, unl])
            logits, cache = numerics.forward(model, train.features[batch_ids])
            probs = numerics.softmax(logits)

            cons_targets = None
            if use_cons and unl.size > 0:
                raw = cons_all[batch_ids]
                mask = np.zeros(batch_ids.size, dtype=bool)
                mask[: lab.size] = True
                cons_targets = cons.minmax_normalize_groups(raw, mask)
            corr_targets = None
            if use_corr:
                raw = corr_labeled[[labeled_slot[int(s)] for s in lab]]
                corr_targets = cons.minmax_normalize(raw)

            batch = losses.make_paired_batch(probs, cons_targets, corr_targets, lab.size)
            loss, d_logits, parts = losses.total_loss(
                probs, visible[lab], batch, config.weights
            )
            grads = numerics.backward(model, cache, d_logits)
            numerics.sgd_step(model, state, grads, epoch)

            sums["total"] += loss
            for key in ("cross_entropy", "correctness", "consistency"):
                sums[key] += parts[key]
            steps += 1

        preds, probs_all = _model_predictions(model, train.features)
        if config.record_consistency and epoch > config.warmup_epochs:
            cons.record_epoch(log, preds)
        if config.record_history:
            pred_history.append(preds)
            conf_history.append(probs_all.max(axis=1))
        loss_history.append({"epoch": epoch, **{k: v / steps for k, v in sums.items()}})

    unl_report = None
    if unlabeled_ids.size > 0 and np.all(train.labels[unlabeled_ids] >= 0):
        unl_report = evaluate(model, train.subset(unlabeled_ids), n_bins=config.n_bins)
    test_report = evaluate(model, test, n_bins=config.n_bins) if test is not None else None
    return RunRecord(
        model=model,
        loss_history=loss_history,
        log=log,
        train_unlabeled_report=unl_report,
        test_report=test_report,
        prediction_history=None if pred_history is None else np.stack(pred_history),
        confidence_history=None if conf_history is None else np.stack(conf_history),
    )


def evaluate(model: numerics.MlpModel, sample_set: SampleSet, n_bins: int = metrics.DEFAULT_ECE_BINS):
    """Forward the set, take max softmax as confidence and compute the full
    metrics report against the set's labels."""
    if np.any(sample_set.labels < 0):
        raise MissingLabelError("evaluation needs a label for every row")
    preds, probs = _model_predictions(model, sample_set.features)
    evaluated = metrics.EvaluatedSet(
        confidence=probs.max(axis=1),
        is_error=preds != sample_set.labels,
        probs=probs,
        labels=sample_set.labels,
    )
    return metrics.full_report(evaluated, n_bins=n_bins)


def _ranking_metrics(scores: np.ndarray, is_error: np.ndarray) -> tuple[float, float]:
    evaluated = metrics.EvaluatedSet(confidence=scores, is_error=is_error)
    value, _ = metrics.aurc(evaluated)
    return value, value - metrics.optimal_aurc(evaluated)


def gap_experiment(config: TrainConfig, train: SampleSet, test: SampleSet | None = None) -> list[dict]:
    """Compare how closely max-softmax tracks training consistency on the
    unlabeled training rows, with and without the ranking losses.

    Returns one row per arm with AURC/E-AURC of both scores and their
    absolute differences.
    """
    unlabeled_ids = np.flatnonzero(~train.labeled_mask)
    if unlabeled_ids.size == 0 or np.any(train.labels[unlabeled_ids] < 0):
        raise ContractError("the gap experiment needs unlabeled rows with oracle labels")
    arms = [
        ("ce_only", dataclasses.replace(config, weights=losses.LossWeights(0.0, 0.0))),
        ("with_ranking", config),
    ]
    rows = []
    for name, arm_config in arms:
        record = train_semisupervised(arm_config, train, test)
        preds, probs = _model_predictions(record.model, train.features[unlabeled_ids])
        is_error = preds != train.labels[unlabeled_ids]
        softmax_scores = probs.max(axis=1)
        cons_scores = cons.consistency(record.log).values[unlabeled_ids]
        aurc_soft, e_aurc_soft = _ranking_metrics(softmax_scores, is_error)
        aurc_cons, e_aurc_cons = _ranking_metrics(cons_scores, is_error)
        rows.append(
            {
                "arm": name,
                "aurc_softmax": aurc_soft,
                "e_aurc_softmax": e_aurc_soft,
                "aurc_consistency": aurc_cons,
                "e_aurc_consistency": e_aurc_cons,
                "diff_aurc": abs(aurc_soft - aurc_cons),
                "diff_e_aurc": abs(e_aurc_soft - e_aurc_cons),
            }
        )
    return rows


def save_run(record: RunRecord, out_dir, config_manifest: dict) -> None:
    """Persist a run: config manifest, checkpoint, metrics JSON, loss-history
    CSV and the consistency CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config_manifest, sort_keys=True, indent=1) + "\n")
    numerics.save_checkpoint(record.model, out / "checkpoint.json")
    payload = {
        "train_unlabeled": None
        if record.train_unlabeled_report is None
        else record.train_unlabeled_report.to_dict(),
        "test": None if record.test_report is None else record.test_report.to_dict(),
    }
    (out / "metrics.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
    with (out / "loss_history.csv").open("w", newline="") as fh:
        fh.write("epoch,total,cross_entropy,correctness,consistency\n")
        for row in record.loss_history:
            fh.write(
                ",".join(
                    [str(row["epoch"])]
                    + [
                        format(row[k], ".17g")
                        for k in ("total", "cross_entropy", "correctness", "consistency")
                    ]
                )
                + "\n"
            )
    if record.log.epochs_recorded >= 2:
        cons.export_log_csv(record.log, out / "consistency.csv")
