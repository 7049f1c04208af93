"""Synthetic dataset generation, CSV persistence and deterministic splits.

CSV schema: header ``id,label,f0,f1,...``; an empty label field marks an
unlabeled row. Floats are written with 17 significant digits so save/load
round-trips are exact for float64. Generators are pure functions of their
parameters and seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

SPLIT_TAGS = ("train", "test")


@dataclass
class SampleSet:
    """Feature matrix with (possibly hidden) labels and a labeled mask.

    ``labels`` uses -1 for unknown; a row with labeled_mask True must carry
    a real label. Rows where the label is known but the mask is False act
    as unlabeled during training while staying usable as evaluation oracle.
    """

    features: np.ndarray
    labels: np.ndarray
    labeled_mask: np.ndarray
    split_tag: str = "train"

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        self.labeled_mask = np.asarray(self.labeled_mask, dtype=bool)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ContractError("features must be a nonempty (m, d) matrix")
        m = self.features.shape[0]
        if self.labels.shape != (m,) or self.labeled_mask.shape != (m,):
            raise ContractError("labels and labeled_mask must align with features")
        if np.any(self.labels[self.labeled_mask] < 0):
            raise ContractError("masked-labeled rows must carry a label")
        if self.split_tag not in SPLIT_TAGS:
            raise ContractError(f"unknown split tag {self.split_tag!r}")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        known = self.labels[self.labels >= 0]
        if known.size == 0:
            raise ContractError("no known labels in this set")
        return int(known.max()) + 1

    def training_labels(self) -> np.ndarray:
        """Labels as visible to a trainer: -1 wherever the mask is False."""
        out = np.full(self.m, -1, dtype=int)
        out[self.labeled_mask] = self.labels[self.labeled_mask]
        return out

    def subset(self, indices, split_tag=None) -> "SampleSet":
        idx = np.asarray(indices, dtype=int)
        return SampleSet(
            features=self.features[idx],
            labels=self.labels[idx],
            labeled_mask=self.labeled_mask[idx],
            split_tag=self.split_tag if split_tag is None else split_tag,
        )


def _simplex_centers(k_classes: int, dim: int, separation: float) -> np.ndarray:
    """Centers of k unit-variance clusters with all pairwise distances equal
    to ``separation``, centered at the origin; needs dim >= k-1."""
    if k_classes < 1:
        raise ContractError("need at least one class")
    if dim < k_classes - 1:
        raise ContractError(f"dim={dim} cannot hold a {k_classes}-vertex simplex")
    centers = np.zeros((k_classes, dim))
    if k_classes == 1 or separation == 0.0:
        return centers
    # vertices e_i of the standard basis, centered; their zero-sum subspace
    # has dimension k-1 and is spanned by e_i - e_k.
    verts = np.eye(k_classes) - 1.0 / k_classes
    span = np.eye(k_classes)[:, : k_classes - 1] - np.eye(k_classes)[:, [k_classes - 1]]
    basis = []
    for col in span.T:
        v = col.copy()
        for b in basis:
            v -= (v @ b) * b
        basis.append(v / np.linalg.norm(v))
    coords = verts @ np.stack(basis, axis=1)  # (k, k-1), pairwise distance sqrt(2)
    centers[:, : k_classes - 1] = coords * (separation / np.sqrt(2.0))
    return centers


def make_blobs(k_classes: int, n_per_class: int, dim: int, separation: float, seed: int) -> SampleSet:
    """Isotropic unit-variance Gaussian clusters at ``separation``-spaced
    simplex vertices, centered on the origin."""
    if n_per_class < 1:
        raise ContractError("need at least one sample per class")
    centers = _simplex_centers(k_classes, dim, separation)
    rng = np.random.default_rng(seed)
    features = np.concatenate(
        [center + rng.standard_normal((n_per_class, dim)) for center in centers]
    )
    labels = np.repeat(np.arange(k_classes), n_per_class)
    return SampleSet(
        features=features,
        labels=labels,
        labeled_mask=np.ones(k_classes * n_per_class, dtype=bool),
    )


def make_moons(n: int, noise: float, seed: int) -> SampleSet:
    """Two interleaved half-circles with Gaussian feature noise."""
    if n < 2:
        raise ContractError("need at least two samples")
    n_outer = n - n // 2
    n_inner = n // 2
    t_outer = np.linspace(0.0, np.pi, n_outer)
    t_inner = np.linspace(0.0, np.pi, n_inner)
    outer = np.column_stack([np.cos(t_outer), np.sin(t_outer)])
    inner = np.column_stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)])
    features = np.concatenate([outer, inner])
    rng = np.random.default_rng(seed)
    if noise > 0.0:
        features = features + noise * rng.standard_normal(features.shape)
    labels = np.concatenate([np.zeros(n_outer, dtype=int), np.ones(n_inner, dtype=int)])
    return SampleSet(features=features, labels=labels, labeled_mask=np.ones(n, dtype=bool))


def make_ood(dim: int, n: int, shift: float, seed: int) -> SampleSet:
    """Unit-variance Gaussian displaced by ``shift`` (Euclidean norm) from
    the origin, which is where the blob generator centers its data."""
    if n < 1 or dim < 1:
        raise ContractError("need positive n and dim")
    rng = np.random.default_rng(seed)
    mean = np.full(dim, shift / np.sqrt(dim))
    features = mean + rng.standard_normal((n, dim))
    return SampleSet(
        features=features,
        labels=np.full(n, -1, dtype=int),
        labeled_mask=np.zeros(n, dtype=bool),
    )


def _stratified_quotas(class_counts: np.ndarray, fraction: float) -> np.ndarray:
    """Largest-remainder allocation: exact when divisible, within one
    sample of the ideal per-class quota otherwise."""
    ideal = class_counts * fraction
    base = np.floor(ideal).astype(int)
    target = int(np.floor(class_counts.sum() * fraction + 0.5))
    target = min(max(target, base.sum()), int(class_counts.sum()))
    remainder = ideal - base
    extra = target - base.sum()
    for cls in np.lexsort((np.arange(remainder.size), -remainder))[:extra]:
        base[cls] += 1
    return np.minimum(base, class_counts)


def stratified_labeled_mask(labels, labeled_fraction: float, seed: int) -> np.ndarray:
    """Seeded stratified choice of which rows keep their label visible."""
    if not 0.0 < labeled_fraction <= 1.0:
        raise ContractError("labeled_fraction must lie in (0, 1]")
    y = np.asarray(labels, dtype=int)
    if np.any(y < 0):
        raise ContractError("stratification needs a label for every row")
    rng = np.random.default_rng(seed)
    classes = np.unique(y)
    counts = np.array([(y == c).sum() for c in classes])
    quotas = _stratified_quotas(counts, labeled_fraction)
    mask = np.zeros(y.size, dtype=bool)
    for cls, quota in zip(classes, quotas):
        members = np.flatnonzero(y == cls)
        mask[rng.permutation(members)[:quota]] = True
    if not mask.any():
        raise ContractError("labeled_fraction selected no samples")
    return mask


def split_semi(
    sample_set: SampleSet, labeled_fraction: float, test_fraction: float, seed: int
) -> tuple[SampleSet, SampleSet]:
    """Stratified test split plus a stratified labeled mask on the rest.

    The input must be fully labeled. Returns (train, test); the train set
    keeps every row's label as oracle but its mask is True only for the
    selected labeled_fraction.
    """
    if not 0.0 < labeled_fraction <= 1.0:
        raise ContractError("labeled_fraction must lie in (0, 1]")
    if not 0.0 < test_fraction <= 1.0:
        raise ContractError("test_fraction must lie in (0, 1]")
    if np.any(sample_set.labels < 0):
        raise ContractError("split_semi needs a fully labeled set")
    labels = sample_set.labels
    classes = np.unique(labels)
    rng = np.random.default_rng(seed)

    class_counts = np.array([(labels == c).sum() for c in classes])
    test_quota = _stratified_quotas(class_counts, test_fraction)
    test_idx = []
    train_idx = []
    for cls, quota in zip(classes, test_quota):
        members = np.flatnonzero(labels == cls)
        picked = rng.permutation(members)[:quota]
        test_idx.append(picked)
        train_idx.append(np.setdiff1d(members, picked))
    test_idx = np.sort(np.concatenate(test_idx))
    train_idx = np.sort(np.concatenate(train_idx))
    if train_idx.size == 0 or test_idx.size == 0:
        raise ContractError("split produced an empty train or test side")

    train_labels = labels[train_idx]
    train_counts = np.array([(train_labels == c).sum() for c in classes])
    labeled_quota = _stratified_quotas(train_counts, labeled_fraction)
    mask = np.zeros(train_idx.size, dtype=bool)
    for cls, quota in zip(classes, labeled_quota):
        members = np.flatnonzero(train_labels == cls)
        mask[rng.permutation(members)[:quota]] = True
    if not mask.any():
        raise ContractError("labeled_fraction selected no samples")

    train = SampleSet(
        features=sample_set.features[train_idx],
        labels=labels[train_idx],
        labeled_mask=mask,
        split_tag="train",
    )
    test = SampleSet(
        features=sample_set.features[test_idx],
        labels=labels[test_idx],
        labeled_mask=np.ones(test_idx.size, dtype=bool),
        split_tag="test",
    )
    return train, test


def save_csv(sample_set: SampleSet, path) -> None:
    """Write rows as ``id,label,f0,...``; unlabeled rows get an empty label.

    Only mask-visible labels are written, so oracle labels of mask-hidden
    rows do not survive a round-trip (the schema has no second label slot).
    """
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"f{j}" for j in range(sample_set.dim)])
        visible = sample_set.training_labels()
        for i in range(sample_set.m):
            label = str(visible[i]) if visible[i] >= 0 else ""
            writer.writerow([i, label] + [format(v, ".17g") for v in sample_set.features[i]])


def load_csv(path) -> SampleSet:
    """Parse the CSV schema above; malformed rows raise DataError citing
    their 1-based line number."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise DataError(f"{path}: header must be id,label,f0,... got {header}")
        dim = len(header) - 2
        if header[2:] != [f"f{j}" for j in range(dim)]:
            raise DataError(f"{path}: feature columns must be named f0..f{dim - 1}")
        ids = []
        labels = []
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != dim + 2:
                raise DataError(f"{path}: row {line_no}: expected {dim + 2} cells, got {len(row)}")
            try:
                ids.append(int(row[0]))
            except ValueError:
                raise DataError(f"{path}: row {line_no}: bad id {row[0]!r}") from None
            cell = row[1].strip()
            if cell == "":
                labels.append(-1)
            else:
                try:
                    label = int(cell)
                except ValueError:
                    raise DataError(f"{path}: row {line_no}: bad label {cell!r}") from None
                if label < 0:
                    raise DataError(f"{path}: row {line_no}: label out of range: {label}")
                labels.append(label)
            try:
                rows.append([float(cell) for cell in row[2:]])
            except ValueError:
                raise DataError(f"{path}: row {line_no}: non-numeric feature") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate sample ids")
    labels = np.asarray(labels, dtype=int)
    return SampleSet(
        features=np.asarray(rows, dtype=float),
        labels=labels,
        labeled_mask=labels >= 0,
    )
