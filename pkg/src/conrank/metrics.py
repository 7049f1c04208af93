"""Ordinal-ranking and calibration metrics.

AURC sorts samples by confidence (descending, ties broken by sample index),
computes the error rate of every prefix and averages those selective risks.
E-AURC subtracts the AURC of an oracle ordering that puts every correct
prediction first, isolating ranking quality from raw accuracy.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, MissingLabelError

REPORT_KEYS = ("accuracy", "aurc", "e_aurc", "ece", "nll", "brier", "fpr95")

DEFAULT_ECE_BINS = 15


@dataclass
class EvaluatedSet:
    """Per-sample confidence scores and error indicators, plus optional
    probability rows needed by the calibration metrics."""

    confidence: np.ndarray
    is_error: np.ndarray
    probs: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.confidence = np.asarray(self.confidence, dtype=float)
        self.is_error = np.asarray(self.is_error, dtype=bool)
        if self.confidence.ndim != 1 or self.confidence.shape != self.is_error.shape:
            raise ContractError("confidence and is_error must be equal-length vectors")
        if self.confidence.size < 1:
            raise ContractError("need at least one sample")
        if not np.all(np.isfinite(self.confidence)):
            raise ContractError("confidence scores must be finite")
        if self.probs is not None:
            self.probs = np.asarray(self.probs, dtype=float)
            if self.probs.ndim != 2 or self.probs.shape[0] != self.confidence.size:
                raise ContractError("probs must be (m, K)")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != self.confidence.shape:
                raise ContractError("labels must align with confidence")

    @property
    def m(self) -> int:
        return self.confidence.size


@dataclass
class RiskCoverageCurve:
    """Selective risk at each coverage prefix, coverage increasing to 1."""

    coverage: np.ndarray
    risk: np.ndarray

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.coverage.tolist(), self.risk.tolist()))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["coverage", "risk"])
            for cov, r in self.points():
                writer.writerow([format(cov, ".17g"), format(r, ".17g")])


@dataclass
class MetricsReport:
    accuracy: float
    aurc: float
    e_aurc: float
    ece: float
    nll: float
    brier: float
    fpr95: float

    def to_dict(self) -> dict:
        return {key: float(getattr(self, key)) for key in REPORT_KEYS}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")


def _confidence_order(evaluated: EvaluatedSet) -> np.ndarray:
    """Indices sorted by descending confidence, ties by ascending index."""
    return np.lexsort((np.arange(evaluated.m), -evaluated.confidence))


def aurc(evaluated: EvaluatedSet) -> tuple[float, RiskCoverageCurve]:
    """Area under the risk-coverage curve plus the curve itself."""
    order = _confidence_order(evaluated)
    errors = evaluated.is_error[order].astype(float)
    sizes = np.arange(1, evaluated.m + 1, dtype=float)
    risks = np.cumsum(errors) / sizes
    curve = RiskCoverageCurve(coverage=sizes / evaluated.m, risk=risks)
    return float(risks.mean()), curve


def optimal_aurc(evaluated: EvaluatedSet) -> float:
    """AURC of the ordering that ranks every correct prediction first."""
    n_err = int(evaluated.is_error.sum())
    sizes = np.arange(1, evaluated.m + 1, dtype=float)
    risks = np.maximum(0.0, sizes - (evaluated.m - n_err)) / sizes
    return float(risks.mean())


def e_aurc(evaluated: EvaluatedSet) -> float:
    """Excess AURC over the optimal ordering; nonnegative."""
    value, _ = aurc(evaluated)
    return value - optimal_aurc(evaluated)


def ece(evaluated: EvaluatedSet, n_bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error over equal-width confidence bins.

    Bins are right-closed on [0, 1]; confidence 0 falls into the first bin
    and confidence 1 into the last. Empty bins are skipped.
    """
    if n_bins < 1:
        raise ContractError("need at least one bin")
    conf = evaluated.confidence
    if np.any(conf < 0.0) or np.any(conf > 1.0):
        raise ContractError("ECE requires confidence scores in [0, 1]")
    idx = np.ceil(conf * n_bins).astype(int) - 1
    idx = np.clip(idx, 0, n_bins - 1)
    total = 0.0
    correct = ~evaluated.is_error
    for b in range(n_bins):
        members = idx == b
        size = int(members.sum())
        if size == 0:
            continue
        gap = abs(correct[members].mean() - conf[members].mean())
        total += (size / evaluated.m) * gap
    return float(total)


def _require_probs(evaluated: EvaluatedSet) -> tuple[np.ndarray, np.ndarray]:
    if evaluated.probs is None or evaluated.labels is None:
        raise ContractError("this metric needs probability rows and labels")
    if np.any(evaluated.labels < 0) or np.any(evaluated.labels >= evaluated.probs.shape[1]):
        raise MissingLabelError("labels out of range for probability rows")
    return evaluated.probs, evaluated.labels


def nll(evaluated: EvaluatedSet) -> float:
    """Mean negative log-probability of the true class."""
    probs, labels = _require_probs(evaluated)
    picked = probs[np.arange(evaluated.m), labels]
    return float(-np.log(np.maximum(picked, np.finfo(float).tiny)).mean())


def brier(evaluated: EvaluatedSet) -> float:
    """Mean squared distance between probability rows and one-hot labels."""
    probs, labels = _require_probs(evaluated)
    onehot = np.zeros_like(probs)
    onehot[np.arange(evaluated.m), labels] = 1.0
    return float(((probs - onehot) ** 2).sum(axis=1).mean())


def fpr_at_95_tpr(evaluated: EvaluatedSet) -> float:
    """False-positive rate at the first (largest) confidence threshold whose
    true-positive rate reaches 0.95.

    Correct predictions are the positives; a sample is accepted when its
    confidence is >= the threshold. Thresholds walk the distinct confidence
    values in descending order (no interpolation).
    """
    correct = ~evaluated.is_error
    n_pos = int(correct.sum())
    if n_pos == 0:
        raise ContractError("FPR at 95% TPR is undefined without correct predictions")
    n_neg = evaluated.m - n_pos
    thresholds = np.unique(evaluated.confidence)[::-1]
    for theta in thresholds:
        accepted = evaluated.confidence >= theta
        tpr = (accepted & correct).sum() / n_pos
        if tpr >= 0.95:
            if n_neg == 0:
                return 0.0
            return float((accepted & ~correct).sum() / n_neg)
    raise ContractError("unreachable: the lowest threshold accepts everything")


def accuracy(evaluated: EvaluatedSet) -> float:
    return float(1.0 - evaluated.is_error.mean())


def ood_metrics(in_scores, out_scores) -> tuple[float, float]:
    """AUROC and detection error for separating in- from out-of-distribution
    scores.

    AUROC is the Mann-Whitney rank statistic (ties counted half) with
    in-distribution as the positive, higher-scoring class. Detection error
    is the minimum over thresholds of 0.5*(1-TPR) + 0.5*FPR.
    """
    a = np.asarray(in_scores, dtype=float)
    b = np.asarray(out_scores, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ContractError("both score sets must be nonempty")
    combined = np.concatenate([a, b])
    ranks = rankdata(combined)
    u = ranks[: a.size].sum() - a.size * (a.size + 1) / 2.0
    auroc = float(u / (a.size * b.size))

    best = 0.5  # threshold above every score: TPR 0, FPR 0
    for theta in np.unique(combined):
        tpr = (a >= theta).mean()
        fpr = (b >= theta).mean()
        best = min(best, 0.5 * (1.0 - tpr) + 0.5 * fpr)
    return auroc, float(best)


def full_report(evaluated: EvaluatedSet, n_bins: int = DEFAULT_ECE_BINS) -> MetricsReport:
    value, _ = aurc(evaluated)
    return MetricsReport(
        accuracy=accuracy(evaluated),
        aurc=value,
        e_aurc=value - optimal_aurc(evaluated),
        ece=ece(evaluated, n_bins),
        nll=nll(evaluated),
        brier=brier(evaluated),
        fpr95=fpr_at_95_tpr(evaluated),
    )


SWEEP_KINDS = ("max_softmax", "consistency", "correctness", "l_count", "l_margin", "l_entropy")


def surrogate_quality_sweep(
    prediction_history,
    confidence_history,
    labels,
    kinds=SWEEP_KINDS,
) -> list[dict]:
    """AURC/E-AURC of several confidence surrogates at every recorded epoch.

    ``prediction_history`` and ``confidence_history`` are (T, m) arrays of
    per-epoch predicted classes and per-epoch max-softmax values; errors at
    epoch t come from comparing that epoch's predictions with ``labels``.
    History-based surrogates use only epochs 1..t. Rows where a surrogate is
    not yet defined (consistency before two epochs) carry available=False.

    Returns long-format rows: epoch, surrogate, aurc, e_aurc, available.
    """
    preds = np.asarray(prediction_history, dtype=int)
    confs = np.asarray(confidence_history, dtype=float)
    y = np.asarray(labels, dtype=int)
    if preds.ndim != 2 or preds.shape != confs.shape:
        raise ContractError("prediction and confidence histories must both be (T, m)")
    if y.shape != (preds.shape[1],):
        raise ContractError("labels must align with history columns")
    unknown = set(kinds) - set(SWEEP_KINDS)
    if unknown:
        raise ContractError(f"unknown surrogate kinds: {sorted(unknown)}")
    n_epochs, m = preds.shape
    n_classes = max(int(preds.max()), int(y.max())) + 1

    agree = np.zeros(m)
    correct_count = np.zeros(m)
    freq = np.zeros((m, n_classes))
    rows = []
    for t in range(n_epochs):
        if t >= 1:
            agree += preds[t] == preds[t - 1]
        correct_count += preds[t] == y
        freq[np.arange(m), preds[t]] += 1.0
        epochs_seen = t + 1
        is_error = preds[t] != y

        values: dict[str, np.ndarray | None] = {}
        values["max_softmax"] = confs[t]
        values["consistency"] = agree / (epochs_seen - 1) if epochs_seen >= 2 else None
        values["correctness"] = correct_count / epochs_seen
        top = np.sort(freq, axis=1)[:, ::-1]
        values["l_count"] = top[:, 0] / epochs_seen
        values["l_margin"] = (top[:, 0] - top[:, 1]) / epochs_seen if n_classes > 1 else np.ones(m)
        p = freq / epochs_seen
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(p > 0.0, -p * np.log(p), 0.0).sum(axis=1)
        values["l_entropy"] = 1.0 - ent / np.log(n_classes) if n_classes > 1 else np.ones(m)

        for kind in kinds:
            scores = values[kind]
            if scores is None:
                rows.append(
                    {"epoch": epochs_seen, "surrogate": kind, "aurc": None, "e_aurc": None, "available": False}
                )
                continue
            ev = EvaluatedSet(confidence=scores, is_error=is_error)
            value, _ = aurc(ev)
            rows.append(
                {
                    "epoch": epochs_seen,
                    "surrogate": kind,
                    "aurc": value,
                    "e_aurc": value - optimal_aurc(ev),
                    "available": True,
                }
            )
    return rows


def sweep_to_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "surrogate", "aurc", "e_aurc", "available"])
        for row in rows:
            writer.writerow(
                [
                    row["epoch"],
                    row["surrogate"],
                    "" if row["aurc"] is None else format(row["aurc"], ".17g"),
                    "" if row["e_aurc"] is None else format(row["e_aurc"], ".17g"),
                    int(row["available"]),
                ]
            )
