"""Empirical certification that the pairwise ranking loss bounds the AURC
gap between a confidence score and its training-consistency targets.

The checker builds order-reversing rankings for both scores, resolves
target ties so the correct samples' rank displacement is minimal, collects
the target gaps at displaced correct/incorrect rank boundaries, and tests

    |AURC(targets) - AURC(confidence)| <= pairwise_loss / (m * min_gap).

AURC values here are computed on rank prefixes with exact rational
arithmetic, so certificates carry no rounding slack of their own and the
excess-AURC gap equals the AURC gap identically. This is a verification
instrument: instance sizes are capped because tie resolution enumerates
position subsets.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ContractError
from .losses import pairwise_ranking_loss

DEFAULT_ENUMERATION_CAP = 8


@dataclass
class RankingAssignment:
    """Bijective ranks 1..m; a higher score gets a smaller rank number."""

    rank: np.ndarray

    @property
    def m(self) -> int:
        return self.rank.size

    def order(self) -> np.ndarray:
        """Sample indices listed from rank 1 to rank m."""
        out = np.empty(self.m, dtype=int)
        out[self.rank - 1] = np.arange(self.m)
        return out


def rank_scores(scores) -> RankingAssignment:
    """Rank by descending score, ties broken by ascending sample index."""
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or s.size < 1:
        raise ContractError("scores must be a nonempty vector")
    if not np.all(np.isfinite(s)):
        raise ContractError("scores must be finite")
    order = np.lexsort((np.arange(s.size), -s))
    rank = np.empty(s.size, dtype=int)
    rank[order] = np.arange(1, s.size + 1)
    return RankingAssignment(rank=rank)


def ranking_aurc(ranking: RankingAssignment, is_error) -> Fraction:
    """Exact prefix AURC of an explicit ranking."""
    errs = np.asarray(is_error, dtype=bool)[ranking.order()]
    total = Fraction(0)
    seen = 0
    for j, e in enumerate(errs, start=1):
        seen += int(e)
        total += Fraction(seen, j)
    return total / errs.size


def optimal_ranking_aurc(is_error) -> Fraction:
    """Exact AURC of the oracle ordering (all correct samples first)."""
    errs = np.asarray(is_error, dtype=bool)
    m = errs.size
    n_correct = int(m - errs.sum())
    total = Fraction(0)
    for j in range(n_correct + 1, m + 1):
        total += Fraction(j - n_correct, j)
    return total / m


def align_consistency_ranking(
    confidence_ranking: RankingAssignment,
    targets,
    correct_mask,
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
) -> RankingAssignment:
    """Order-reversing ranking of ``targets`` whose tie resolution minimizes
    the correct samples' displacement from their confidence ranks.

    Among all rankings consistent with the target order, picks one whose
    set of correct-sample ranks is closest (best bijective matching, sum of
    absolute differences) to the correct-sample ranks under the confidence
    ranking. Ties within a target value only matter through which positions
    go to correct samples, so the search enumerates position subsets per
    tie group; the first minimizer in enumeration order is returned.
    """
    t = np.asarray(targets, dtype=float)
    correct = np.asarray(correct_mask, dtype=bool)
    m = t.size
    if correct.shape != t.shape or confidence_ranking.m != m:
        raise ContractError("targets, correct_mask and ranking must agree in length")
    if m > enumeration_cap:
        raise ContractError(
            f"instance size {m} exceeds the enumeration cap {enumeration_cap}"
        )
    desc = np.lexsort((np.arange(m), -t))
    groups = []  # (first_position, sample indices) with positions 0-based
    start = 0
    while start < m:
        stop = start
        while stop < m and t[desc[stop]] == t[desc[start]]:
            stop += 1
        groups.append((start, desc[start:stop]))
        start = stop
    hk = np.sort(confidence_ranking.rank[correct])

    best_cost = None
    best_rank = None
    for choice in itertools.product(
        *(
            itertools.combinations(range(len(members)), int(correct[members].sum()))
            for _, members in groups
        )
    ):
        rank = np.empty(m, dtype=int)
        hc = []
        for (first, members), correct_slots in zip(groups, choice):
            slots = list(range(len(members)))
            wrong_slots = [s for s in slots if s not in correct_slots]
            for sample, slot in zip(members[correct[members]], correct_slots):
                rank[sample] = first + slot + 1
                hc.append(first + slot + 1)
            for sample, slot in zip(members[~correct[members]], wrong_slots):
                rank[sample] = first + slot + 1
        cost = int(np.abs(hk - np.sort(hc)).sum()) if len(hc) else 0
        if best_cost is None or cost < best_cost:
            best_cost = cost
            best_rank = rank
    return RankingAssignment(rank=best_rank)


@dataclass
class TheoremQuantities:
    """Rank-comparison statistics entering the bound."""

    rank_mismatch_count: int
    min_target_gap: float
    misordered_correct_count: int
    correct_prefix_length: int


def _prefix_correct_counts(ranking: RankingAssignment, correct: np.ndarray) -> np.ndarray:
    flags = correct[ranking.order()].astype(int)
    return np.cumsum(flags)


def _quantities_from_rankings(
    confidence_ranking: RankingAssignment,
    target_ranking: RankingAssignment,
    targets: np.ndarray,
    correct: np.ndarray,
) -> TheoremQuantities:
    m = targets.size
    counts_k = _prefix_correct_counts(confidence_ranking, correct)
    counts_c = _prefix_correct_counts(target_ranking, correct)
    mismatch = int((counts_k != counts_c).sum())

    order_c = target_ranking.order()
    prefix = 0
    for sample in order_c:
        if not correct[sample]:
            break
        prefix += 1
    n_correct = int(correct.sum())

    hk = np.sort(confidence_ranking.rank[correct])
    hc = np.sort(target_ranking.rank[correct])
    gamma = dict(zip(hk.tolist(), hc.tolist()))
    target_at_rank = targets[order_c]  # value sitting at rank j (index j-1)
    gaps = []
    for sample in np.flatnonzero(correct):
        r = int(confidence_ranking.rank[sample])
        i = gamma[r]
        step = int(np.sign(r - i))
        if step == 0:
            continue
        j = i + step
        if j < 1 or j > m:
            continue
        if correct[order_c[j - 1]]:
            continue
        gaps.append(abs(float(target_at_rank[i - 1]) - float(target_at_rank[j - 1])))
    min_gap = min(gaps) if gaps else math.inf
    return TheoremQuantities(
        rank_mismatch_count=mismatch,
        min_target_gap=min_gap,
        misordered_correct_count=n_correct - prefix,
        correct_prefix_length=prefix,
    )


def theorem_quantities(
    confidence, targets, is_error, enumeration_cap: int = DEFAULT_ENUMERATION_CAP
) -> TheoremQuantities:
    t = np.asarray(targets, dtype=float)
    errs = np.asarray(is_error, dtype=bool)
    ranking_k = rank_scores(confidence)
    ranking_c = align_consistency_ranking(ranking_k, t, ~errs, enumeration_cap)
    return _quantities_from_rankings(ranking_k, ranking_c, t, ~errs)


BOUND_SLACK = 1e-12


@dataclass
class BoundCertificate:
    """One certified instance of the loss-to-AURC bound."""

    m: int
    aurc_confidence: float
    aurc_targets: float
    aurc_gap: float
    e_aurc_gap: float
    rank_mismatch_count: int
    min_target_gap: float
    pairwise_loss: float
    bound_value: float
    holds: bool
    vacuous: bool
    misordered_correct_count: int
    correct_prefix_length: int

    def to_json_dict(self) -> dict:
        def encode(value):
            if isinstance(value, float) and math.isinf(value):
                return "infinite"
            return value

        return {
            "m": self.m,
            "aurc_confidence": self.aurc_confidence,
            "aurc_targets": self.aurc_targets,
            "aurc_gap": self.aurc_gap,
            "e_aurc_gap": self.e_aurc_gap,
            "rank_mismatch_count": self.rank_mismatch_count,
            "min_target_gap": encode(self.min_target_gap),
            "pairwise_loss": self.pairwise_loss,
            "bound_value": encode(self.bound_value),
            "holds": self.holds,
            "vacuous": self.vacuous,
            "misordered_correct_count": self.misordered_correct_count,
            "correct_prefix_length": self.correct_prefix_length,
        }


def certify_bound(
    confidence, targets, is_error, enumeration_cap: int = DEFAULT_ENUMERATION_CAP
) -> BoundCertificate:
    """Evaluate both bound sides on one instance.

    Requires distinct confidence values (the ranking must be one-to-one).
    An empty boundary-gap set, or a zero minimum gap, makes the right side
    unbounded; such certificates are flagged vacuous.
    """
    conf = np.asarray(confidence, dtype=float)
    t = np.asarray(targets, dtype=float)
    errs = np.asarray(is_error, dtype=bool)
    if conf.shape != t.shape or conf.shape != errs.shape or conf.ndim != 1:
        raise ContractError("confidence, targets and is_error must be equal-length vectors")
    m = conf.size
    if np.unique(conf).size != m:
        raise ContractError("confidence values must be distinct")

    ranking_k = rank_scores(conf)
    ranking_c = align_consistency_ranking(ranking_k, t, ~errs, enumeration_cap)
    quantities = _quantities_from_rankings(ranking_k, ranking_c, t, ~errs)

    aurc_k = ranking_aurc(ranking_k, errs)
    aurc_c = ranking_aurc(ranking_c, errs)
    optimal = optimal_ranking_aurc(errs)
    gap = abs(aurc_c - aurc_k)
    excess_gap = abs((aurc_c - optimal) - (aurc_k - optimal))

    loss, _ = pairwise_ranking_loss(t, conf)
    min_gap = quantities.min_target_gap
    if math.isinf(min_gap) or min_gap == 0.0:
        bound = math.inf
    else:
        bound = loss / (m * min_gap)
    holds = float(gap) <= bound + BOUND_SLACK
    return BoundCertificate(
        m=m,
        aurc_confidence=float(aurc_k),
        aurc_targets=float(aurc_c),
        aurc_gap=float(gap),
        e_aurc_gap=float(excess_gap),
        rank_mismatch_count=quantities.rank_mismatch_count,
        min_target_gap=min_gap,
        pairwise_loss=loss,
        bound_value=bound,
        holds=holds,
        vacuous=math.isinf(bound),
        misordered_correct_count=quantities.misordered_correct_count,
        correct_prefix_length=quantities.correct_prefix_length,
    )


def random_instance(rng, max_m: int = 8, max_classes: int = 3):
    """Random (confidence, targets, is_error) triple with distinct confidence.

    Errors come from random predictions against random labels over at most
    ``max_classes`` classes. Half the instances draw targets from a coarse
    grid so tie resolution is exercised.
    """
    m = int(rng.integers(2, max_m + 1))
    k = int(rng.integers(2, max_classes + 1))
    labels = rng.integers(0, k, size=m)
    preds = rng.integers(0, k, size=m)
    is_error = preds != labels
    conf = rng.random(m)
    while np.unique(conf).size < m:
        conf = rng.random(m)
    if rng.random() < 0.5:
        targets = rng.random(m)
    else:
        targets = rng.integers(0, 5, size=m) / 4.0
    return conf, targets, is_error


def _certify_seeded(args) -> BoundCertificate:
    seed, index, max_m, max_classes = args
    rng = np.random.default_rng([seed, index])
    conf, targets, is_error = random_instance(rng, max_m=max_m, max_classes=max_classes)
    return certify_bound(conf, targets, is_error, enumeration_cap=max_m)


def certification_campaign(
    n_instances: int,
    seed: int = 0,
    max_m: int = DEFAULT_ENUMERATION_CAP,
    max_classes: int = 3,
    jobs: int = 1,
) -> list[BoundCertificate]:
    """Certify ``n_instances`` random instances; results do not depend on
    ``jobs`` (each instance is seeded independently)."""
    if n_instances < 0:
        raise ContractError("instance count must be nonnegative")
    tasks = [(seed, i, max_m, max_classes) for i in range(n_instances)]
    if jobs <= 1 or n_instances <= 1:
        return [_certify_seeded(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_certify_seeded, tasks, chunksize=max(1, n_instances // (4 * jobs))))


def certificates_to_jsonl(certificates, path) -> None:
    with Path(path).open("w") as fh:
        for cert in certificates:
            fh.write(json.dumps(cert.to_json_dict(), sort_keys=True) + "\n")
