"""Streaming per-sample tracker of epoch-wise predictions.

A ConsistencyLog never stores full prediction sequences; it keeps running
counts sufficient to recover, for each tracked sample:

* consistency: fraction of consecutive epoch pairs with the same predicted
  class,
* correctness: fraction of epochs predicted correctly (labeled samples),
* label-frequency summaries: top class frequency, margin between the top
  two, and an entropy score mapped so that higher means more confident.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, InsufficientHistoryError, MissingLabelError

SURROGATE_KINDS = (
    "consistency",
    "correctness",
    "l_count",
    "l_margin",
    "l_entropy",
    "max_softmax",
)


@dataclass
class SurrogateScores:
    """Per-sample confidence surrogate values in [0, 1], tagged by kind."""

    kind: str
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in SURROGATE_KINDS:
            raise ContractError(f"unknown surrogate kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ContractError("surrogate values must be finite")
        if np.any(v < -1e-12) or np.any(v > 1.0 + 1e-12):
            raise ContractError("surrogate values must lie in [0, 1]")
        self.values = np.clip(v, 0.0, 1.0)


@dataclass
class ConsistencyLog:
    """Running prediction statistics for a fixed set of samples.

    ``labels`` holds the training-visible label per sample, -1 where
    unknown; correctness counts are only maintained where a label is known.
    """

    n_samples: int
    n_classes: int
    labels: np.ndarray
    epochs_recorded: int
    last_prediction: np.ndarray
    consistency_events: np.ndarray
    correct_events: np.ndarray
    label_freq: np.ndarray

    @classmethod
    def for_samples(cls, n_samples: int, n_classes: int, labels=None) -> "ConsistencyLog":
        if n_samples < 1 or n_classes < 1:
            raise ContractError("need at least one sample and one class")
        if labels is None:
            lab = np.full(n_samples, -1, dtype=int)
        else:
            lab = np.asarray(labels, dtype=int)
            if lab.shape != (n_samples,):
                raise ContractError(f"labels shape {lab.shape} != ({n_samples},)")
            if np.any(lab >= n_classes):
                raise ContractError("labels out of range")
        return cls(
            n_samples=n_samples,
            n_classes=n_classes,
            labels=lab,
            epochs_recorded=0,
            last_prediction=np.full(n_samples, -1, dtype=int),
            consistency_events=np.zeros(n_samples, dtype=int),
            correct_events=np.zeros(n_samples, dtype=int),
            label_freq=np.zeros((n_samples, n_classes), dtype=int),
        )


def record_epoch(log: ConsistencyLog, predictions) -> None:
    """Fold one epoch of predictions (covering every sample) into the log."""
    preds = np.asarray(predictions, dtype=int)
    if preds.shape != (log.n_samples,):
        raise ContractError(
            f"predictions must cover all {log.n_samples} samples, got shape {preds.shape}"
        )
    if np.any(preds < 0) or np.any(preds >= log.n_classes):
        raise ContractError("predicted class index out of range")
    if log.epochs_recorded >= 1:
        log.consistency_events += preds == log.last_prediction
    known = log.labels >= 0
    log.correct_events[known] += preds[known] == log.labels[known]
    log.label_freq[np.arange(log.n_samples), preds] += 1
    log.last_prediction = preds.copy()
    log.epochs_recorded += 1


def consistency(log: ConsistencyLog) -> SurrogateScores:
    """Fraction of consecutive-epoch agreements per sample; needs >= 2 epochs."""
    if log.epochs_recorded < 2:
        raise InsufficientHistoryError(
            f"consistency needs at least 2 recorded epochs, have {log.epochs_recorded}"
        )
    values = log.consistency_events / (log.epochs_recorded - 1)
    return SurrogateScores(kind="consistency", values=values)


def correctness(log: ConsistencyLog, sample_ids=None) -> SurrogateScores:
    """Fraction of epochs predicted correctly for the requested samples.

    Raises MissingLabelError if any requested sample has no known label.
    """
    if log.epochs_recorded < 1:
        raise InsufficientHistoryError("correctness needs at least 1 recorded epoch")
    ids = np.arange(log.n_samples) if sample_ids is None else np.asarray(sample_ids, dtype=int)
    if np.any(ids < 0) or np.any(ids >= log.n_samples):
        raise ContractError("sample id out of range")
    if np.any(log.labels[ids] < 0):
        raise MissingLabelError("correctness requested for unlabeled samples")
    values = log.correct_events[ids] / log.epochs_recorded
    return SurrogateScores(kind="correctness", values=values)


def label_frequency_surrogates(
    log: ConsistencyLog,
) -> tuple[SurrogateScores, SurrogateScores, SurrogateScores]:
    """Top-frequency, margin and entropy summaries of the label counts."""
    if log.epochs_recorded < 1:
        raise InsufficientHistoryError("label-frequency surrogates need >= 1 recorded epoch")
    counts = np.sort(log.label_freq, axis=1)[:, ::-1].astype(float)
    t = float(log.epochs_recorded)
    l_count = counts[:, 0] / t
    l_margin = (counts[:, 0] - counts[:, 1]) / t if log.n_classes > 1 else np.ones(log.n_samples)
    freq = log.label_freq / t
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(freq > 0.0, -freq * np.log(freq), 0.0)
    entropy = terms.sum(axis=1)
    if log.n_classes > 1:
        l_entropy = 1.0 - entropy / np.log(log.n_classes)
    else:
        l_entropy = np.ones(log.n_samples)
    return (
        SurrogateScores(kind="l_count", values=l_count),
        SurrogateScores(kind="l_margin", values=l_margin),
        SurrogateScores(kind="l_entropy", values=l_entropy),
    )


def minmax_normalize(values) -> np.ndarray:
    """Map values to [0, 1] by min-max; a constant group maps to all ones."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ContractError("cannot normalize an empty group")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.ones_like(v)
    return (v - lo) / (hi - lo)


def minmax_normalize_groups(values, labeled_mask) -> np.ndarray:
    """Min-max normalize the labeled and unlabeled groups independently."""
    v = np.asarray(values, dtype=float)
    mask = np.asarray(labeled_mask, dtype=bool)
    if v.shape != mask.shape:
        raise ContractError("values and labeled_mask must have the same length")
    if not mask.any() or mask.all():
        raise ContractError("both groups must be nonempty")
    out = np.empty_like(v)
    out[mask] = minmax_normalize(v[mask])
    out[~mask] = minmax_normalize(v[~mask])
    return out


def export_log_csv(log: ConsistencyLog, path) -> None:
    """Write per-sample surrogate scores as CSV.

    Columns: sample_id, consistency, correctness (blank if unlabeled),
    l_count, l_margin, l_entropy.
    """
    cons = consistency(log).values
    l_count, l_margin, l_entropy = (s.values for s in label_frequency_surrogates(log))
    known = log.labels >= 0
    corr = np.full(log.n_samples, np.nan)
    if known.any():
        corr[known] = correctness(log, sample_ids=np.flatnonzero(known)).values
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "consistency", "correctness", "l_count", "l_margin", "l_entropy"])
        for i in range(log.n_samples):
            writer.writerow(
                [
                    i,
                    format(cons[i], ".17g"),
                    format(corr[i], ".17g") if known[i] else "",
                    format(l_count[i], ".17g"),
                    format(l_margin[i], ".17g"),
                    format(l_entropy[i], ".17g"),
                ]
            )
