"""Training losses with analytic gradients.

Besides plain cross-entropy this module implements hinge ranking losses
that push the model's top softmax probability to respect the ordering of a
per-sample target score (training consistency or correctness):

* pairwise_ranking_loss: sums max{0, (t_s - t_i) - (k_s - k_i)} over every
  ordered pair with t_i < t_s,
* cyclic_ranking_loss: the minibatch approximation that pairs each sample
  with its cyclic successor inside a group,
* batch_ranking_loss: cyclic loss applied to the labeled prefix and the
  unlabeled suffix of a joint batch independently,
* total_loss: cross-entropy plus weighted correctness and consistency
  ranking terms, differentiated back to the logits.

Hinge kinks use the inactive (zero) branch of the subgradient; the top
softmax entry is differentiated treating the argmax index as locally
constant, with ties broken toward the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

# Probabilities are floored here before log() so a fully underflowed class
# still yields a finite loss.
_LOG_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class LossWeights:
    """Weights of the correctness and consistency ranking terms."""

    correctness: float = 0.5
    consistency: float = 0.5

    def __post_init__(self) -> None:
        for name, value in (("correctness", self.correctness), ("consistency", self.consistency)):
            if not np.isfinite(value) or value < 0.0:
                raise ContractError(f"{name} weight must be finite and nonnegative")


@dataclass
class PairedBatch:
    """A joint labeled+unlabeled batch prepared for the ranking losses.

    Rows [0, group_boundary) are labeled, the rest unlabeled. ``targets``
    holds per-group min-max normalized consistency; ``corr_targets`` holds
    normalized correctness for the labeled prefix. Either may be None when
    the corresponding term is inactive (e.g. not enough recorded epochs).
    """

    probs: np.ndarray
    confidence: np.ndarray
    targets: np.ndarray | None
    corr_targets: np.ndarray | None
    group_boundary: int


def make_paired_batch(probs, cons_targets, corr_targets, group_boundary) -> PairedBatch:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2:
        raise ContractError("probs must be a (m, K) matrix")
    m = p.shape[0]
    if not 0 <= group_boundary <= m:
        raise ContractError("group_boundary outside batch")
    for name, t, expect in (
        ("targets", cons_targets, m),
        ("corr_targets", corr_targets, group_boundary),
    ):
        if t is not None:
            t = np.asarray(t, dtype=float)
            if t.shape != (expect,):
                raise ContractError(f"{name} must have length {expect}")
            if np.any(t < -1e-12) or np.any(t > 1.0 + 1e-12):
                raise ContractError(f"{name} must lie in [0, 1]")
    return PairedBatch(
        probs=p,
        confidence=p.max(axis=1),
        targets=None if cons_targets is None else np.asarray(cons_targets, dtype=float),
        corr_targets=None if corr_targets is None else np.asarray(corr_targets, dtype=float),
        group_boundary=int(group_boundary),
    )


def cross_entropy(probs, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-probability of the true class.

    Returns (loss, gradient w.r.t. logits) where the gradient is the usual
    (p - onehot) / m of softmax cross-entropy.
    """
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=int)
    if p.ndim != 2 or y.shape != (p.shape[0],):
        raise ContractError("probs must be (m, K) with one label per row")
    m, k = p.shape
    if np.any(y < 0) or np.any(y >= k):
        raise ContractError("label out of range")
    picked = p[np.arange(m), y]
    loss = float(-np.log(np.maximum(picked, _LOG_FLOOR)).mean())
    d_logits = p.copy()
    d_logits[np.arange(m), y] -= 1.0
    d_logits /= m
    return loss, d_logits


def pairwise_ranking_loss(targets, scores) -> tuple[float, np.ndarray]:
    """Full ordered-pair hinge: sum over pairs with t_i < t_s of
    max{0, (t_s - t_i) - (k_s - k_i)}.

    Returns (loss, gradient w.r.t. scores).
    """
    t = np.asarray(targets, dtype=float)
    k = np.asarray(scores, dtype=float)
    if t.shape != k.shape or t.ndim != 1:
        raise ContractError("targets and scores must be equal-length vectors")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(k))):
        raise ContractError("targets and scores must be finite")
    # pair (s, i): rows index s, columns index i
    dt = t[:, None] - t[None, :]
    dk = k[:, None] - k[None, :]
    active = (dt > 0.0) & (dt - dk > 0.0)
    loss = float((dt - dk)[active].sum())
    d_scores = np.zeros_like(k)
    # d/dk_s = -1 and d/dk_i = +1 per active pair
    d_scores -= active.sum(axis=1).astype(float)
    d_scores += active.sum(axis=0).astype(float)
    return loss, d_scores


def cyclic_ranking_loss(targets, scores) -> tuple[float, np.ndarray]:
    """Successor-pair hinge within one group.

    Pairs sample s with its cyclic successor and adds
    max{0, |dt| - sign(dt) * dk}; groups smaller than 2 contribute 0.
    """
    t = np.asarray(targets, dtype=float)
    k = np.asarray(scores, dtype=float)
    if t.shape != k.shape or t.ndim != 1:
        raise ContractError("targets and scores must be equal-length vectors")
    n = t.size
    d_scores = np.zeros_like(k)
    if n < 2:
        return 0.0, d_scores
    succ = np.roll(np.arange(n), -1)
    dt = t - t[succ]
    dk = k - k[succ]
    sign = np.sign(dt)
    margin = np.abs(dt) - sign * dk
    active = margin > 0.0
    loss = float(margin[active].sum())
    np.add.at(d_scores, np.arange(n)[active], -sign[active])
    np.add.at(d_scores, succ[active], sign[active])
    return loss, d_scores


def correctness_ranking_loss(targets, scores) -> tuple[float, np.ndarray]:
    """Cyclic ranking loss on labeled samples with correctness targets."""
    return cyclic_ranking_loss(targets, scores)


def batch_ranking_loss(batch: PairedBatch) -> tuple[float, np.ndarray]:
    """Cyclic ranking loss over the labeled and unlabeled groups of a batch."""
    if batch.targets is None:
        raise ContractError("batch has no consistency targets")
    b = batch.group_boundary
    loss_l, grad_l = cyclic_ranking_loss(batch.targets[:b], batch.confidence[:b])
    loss_u, grad_u = cyclic_ranking_loss(batch.targets[b:], batch.confidence[b:])
    return loss_l + loss_u, np.concatenate([grad_l, grad_u])


def confidence_grad_to_logits(probs, d_confidence) -> np.ndarray:
    """Chain a gradient w.r.t. per-row max softmax back to the logits.

    With a = argmax of row p (lowest index on ties), d max(p) / d z_k =
    p_a * (1{a=k} - p_k).
    """
    p = np.asarray(probs, dtype=float)
    g = np.asarray(d_confidence, dtype=float)
    m, _ = p.shape
    top = p.argmax(axis=1)
    p_top = p[np.arange(m), top]
    d_logits = (-g * p_top)[:, None] * p
    d_logits[np.arange(m), top] += g * p_top
    return d_logits


def total_loss(probs, labels, batch: PairedBatch, weights: LossWeights):
    """Cross-entropy plus weighted ranking terms, as a function of logits.

    ``labels`` covers the labeled prefix of the batch. Returns
    (loss, gradient w.r.t. the full batch logits, per-term dict). A ranking
    term whose targets are absent from the batch contributes zero.
    """
    p = np.asarray(probs, dtype=float)
    if p.shape != batch.probs.shape or not np.array_equal(p, batch.probs):
        raise ContractError("probs must be the batch's own probability rows")
    nb = batch.group_boundary
    y = np.asarray(labels, dtype=int)
    if y.shape != (nb,):
        raise ContractError(f"labels must cover the labeled prefix ({nb} rows)")
    m = p.shape[0]

    ce, d_logits_ce = cross_entropy(p[:nb], y) if nb > 0 else (0.0, np.zeros((0, p.shape[1])))
    d_logits = np.zeros_like(p)
    d_logits[:nb] = d_logits_ce

    d_confidence = np.zeros(m)
    corr_term = 0.0
    if weights.correctness > 0.0 and batch.corr_targets is not None:
        corr_term, d_conf_l = correctness_ranking_loss(
            batch.corr_targets, batch.confidence[:nb]
        )
        d_confidence[:nb] += weights.correctness * d_conf_l
    cons_term = 0.0
    if weights.consistency > 0.0 and batch.targets is not None:
        cons_term, d_conf = batch_ranking_loss(batch)
        d_confidence += weights.consistency * d_conf

    if np.any(d_confidence != 0.0):
        d_logits += confidence_grad_to_logits(p, d_confidence)

    loss = ce + weights.correctness * corr_term + weights.consistency * cons_term
    parts = {"cross_entropy": ce, "correctness": corr_term, "consistency": cons_term}
    return loss, d_logits, parts
