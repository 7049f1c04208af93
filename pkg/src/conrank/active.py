"""Staged active-learning simulator: train, score the unlabeled pool, query
the least certain samples, reveal their oracle labels, repeat."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics
from .datasets import SampleSet
from .errors import ContractError
from .metrics import MetricsReport
from .pipeline import TrainConfig, train_semisupervised

STRATEGIES = ("least_confidence", "entropy", "random")


@dataclass(frozen=True)
class ActiveConfig:
    stages: int
    query_size: int
    strategy: str
    train: TrainConfig
    seed: int = 0
    warm_start: bool = False

    def validate(self) -> None:
        if self.stages < 1:
            raise ContractError("need at least one stage")
        if self.query_size < 0:
            raise ContractError("query_size must be nonnegative")
        if self.strategy not in STRATEGIES:
            raise ContractError(f"unknown strategy {self.strategy!r}")


@dataclass
class StageResult:
    stage: int
    queried_ids: np.ndarray
    report: MetricsReport


def query(model: numerics.MlpModel, pool: SampleSet, strategy: str, k: int, seed: int) -> np.ndarray:
    """Pick k pool rows to annotate next; returns row indices into the pool.

    least_confidence takes the k smallest max-softmax scores, entropy the k
    largest prediction entropies, random a seeded uniform draw without
    replacement. Ties break toward the lower row index.
    """
    if strategy not in STRATEGIES:
        raise ContractError(f"unknown strategy {strategy!r}")
    if k > pool.m:
        raise ContractError(f"cannot query {k} samples from a pool of {pool.m}")
    if k == 0:
        return np.empty(0, dtype=int)
    if strategy == "random":
        rng = np.random.default_rng(seed)
        return np.sort(rng.choice(pool.m, size=k, replace=False))
    logits, _ = numerics.forward(model, pool.features)
    probs = numerics.softmax(logits)
    if strategy == "least_confidence":
        keys = probs.max(axis=1)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(probs > 0.0, -probs * np.log(probs), 0.0)
        keys = -terms.sum(axis=1)  # most entropic first
    order = np.lexsort((np.arange(pool.m), keys))
    return np.sort(order[:k])


def run_active(config: ActiveConfig, train: SampleSet, test: SampleSet) -> list[StageResult]:
    """Run the staged loop; labels of queried rows become visible to the
    next stage. Deterministic given the config seed."""
    config.validate()
    if not train.labeled_mask.any():
        raise ContractError("the initial labeled pool is empty")
    if np.any(train.labels < 0):
        raise ContractError("active learning needs oracle labels for every row")
    pool_size = int((~train.labeled_mask).sum())
    if config.stages * config.query_size > pool_size:
        raise ContractError(
            f"{config.stages} stages x {config.query_size} queries exceed the pool ({pool_size})"
        )
    stage_seeds = np.random.SeedSequence(config.seed).generate_state(2 * config.stages)

    mask = train.labeled_mask.copy()
    model = None
    results = []
    for stage in range(1, config.stages + 1):
        current = SampleSet(
            features=train.features,
            labels=train.labels,
            labeled_mask=mask.copy(),
            split_tag="train",
        )
        train_config = dataclasses.replace(config.train, seed=int(stage_seeds[2 * (stage - 1)]))
        record = train_semisupervised(train_config, current, test)
        model = record.model

        pool_ids = np.flatnonzero(~mask)
        k = min(config.query_size, pool_ids.size)
        if k < config.query_size:
            raise ContractError("unlabeled pool exhausted")
        picked = query(
            model,
            current.subset(pool_ids),
            config.strategy,
            k,
            seed=int(stage_seeds[2 * (stage - 1) + 1]),
        )
        chosen = pool_ids[picked]
        mask[chosen] = True
        results.append(StageResult(stage=stage, queried_ids=chosen, report=record.test_report))
    return results


def stages_to_csv(results: list[StageResult], strategy: str, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "strategy", "accuracy", "aurc", "e_aurc"])
        for res in results:
            writer.writerow(
                [
                    res.stage,
                    strategy,
                    format(res.report.accuracy, ".17g"),
                    format(res.report.aurc, ".17g"),
                    format(res.report.e_aurc, ".17g"),
                ]
            )
