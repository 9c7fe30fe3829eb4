"""Synthetic data generation, biased multiparty partitioning, and CSV I/O.

A ``LocalDataset`` is one party's view of the world: a feature matrix, the
labels that go with it, and the subset of the global label space the party
can actually observe. Partitioning a dataset according to a ``PartitionSpec``
produces one such shard per party, with label-biased class assignments and
optional per-class subsampling fractions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

TOY_CIRCLE_RADIUS = 4.0
TOY_BLOB_SIGMA = 0.8
# Pulling one adjacent pair of blobs to this centre distance creates a single
# slightly-overlapping class boundary, so a good classifier lands just below
# 100% accuracy instead of saturating.
TOY_OVERLAP_PAIR = (1, 2)
TOY_OVERLAP_DISTANCE = 3.2


@dataclass
class LabeledSample:
    """A single feature vector with its class label."""

    features: np.ndarray
    label: int


@dataclass
class LocalDataset:
    """A party's data shard together with its local label space.

    Attributes:
        features: (n, d) float array; finite entries only.
        labels: (n,) int array with values inside ``label_space``.
        label_space: sorted tuple of the class indices this shard may contain.
        num_classes: size K of the global label space.
    """

    features: np.ndarray
    labels: np.ndarray
    label_space: tuple[int, ...]
    num_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            feats = feats.reshape(len(feats), -1) if feats.size else feats.reshape(0, 0)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.shape[0] != labels.shape[0]:
            raise ValueError(
                f"feature/label count mismatch: {feats.shape[0]} vs {labels.shape[0]}"
            )
        if feats.size and not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite (found NaN or Inf)")
        space = tuple(sorted(int(c) for c in set(self.label_space)))
        if space and (space[0] < 0 or space[-1] >= self.num_classes):
            raise ValueError(
                f"label_space {space} not contained in [0, {self.num_classes})"
            )
        if labels.size:
            present = set(int(v) for v in np.unique(labels))
            if not present.issubset(space):
                raise ValueError(
                    f"labels {sorted(present - set(space))} outside label_space {space}"
                )
        feats.setflags(write=False)
        labels.setflags(write=False)
        self.features = feats
        self.labels = labels
        self.label_space = space

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1] if self.features.ndim == 2 else 0

    @property
    def samples(self) -> list[LabeledSample]:
        return [
            LabeledSample(self.features[i], int(self.labels[i]))
            for i in range(len(self))
        ]

    def class_counts(self) -> dict[int, int]:
        vals, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def subset(self, index: np.ndarray, label_space: tuple[int, ...] | None = None) -> "LocalDataset":
        space = self.label_space if label_space is None else label_space
        return LocalDataset(self.features[index], self.labels[index], space, self.num_classes)


@dataclass
class PartyRule:
    """Which classes a party may see, and the fraction of each it receives."""

    classes: tuple[int, ...]
    fraction: float = 1.0


@dataclass
class PartitionSpec:
    """Label-biased partition assignment: one rule per party plus an RNG seed."""

    parties: list[PartyRule]
    seed: int = 0

    def __post_init__(self):
        if not self.parties:
            raise ValueError("partition spec needs at least one party")
        per_class: dict[int, float] = {}
        for i, rule in enumerate(self.parties):
            if not rule.classes:
                raise ValueError(f"parties[{i}]: empty class set")
            if not (0.0 < rule.fraction <= 1.0):
                raise ValueError(
                    f"parties[{i}]: fraction {rule.fraction} outside (0, 1]"
                )
            for c in rule.classes:
                per_class[c] = per_class.get(c, 0.0) + rule.fraction
        bad = {c: s for c, s in per_class.items() if s > 1.0 + 1e-9}
        if bad:
            raise ValueError(f"class fractions exceed 1: {bad}")

    @property
    def covered_classes(self) -> set[int]:
        return {c for rule in self.parties for c in rule.classes}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "parties": [
                {"classes": list(r.classes), "fraction": r.fraction}
                for r in self.parties
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionSpec":
        parties = [
            PartyRule(tuple(int(c) for c in p["classes"]), float(p.get("fraction", 1.0)))
            for p in d["parties"]
        ]
        return cls(parties=parties, seed=int(d.get("seed", 0)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PartitionSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def toy_blob_means(num_classes: int) -> np.ndarray:
    """Blob centres for the synthetic dataset: K points on a circle.

    The circle radius is chosen so adjacent centres keep the same spacing for
    any K (radius 4 at K=5). The overlap pair, when both its members exist,
    is pulled together symmetrically to ``TOY_OVERLAP_DISTANCE``.
    """
    k = num_classes
    if k == 1:
        return np.zeros((1, 2))
    base_chord = 2.0 * TOY_CIRCLE_RADIUS * np.sin(np.pi / 5.0)
    radius = base_chord / (2.0 * np.sin(np.pi / k))
    angles = 2.0 * np.pi * np.arange(k) / k + np.pi / 2.0
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    a, b = TOY_OVERLAP_PAIR
    if a < k and b < k:
        mid = 0.5 * (means[a] + means[b])
        gap = means[a] - means[b]
        unit = gap / np.linalg.norm(gap)
        means[a] = mid + 0.5 * TOY_OVERLAP_DISTANCE * unit
        means[b] = mid - 0.5 * TOY_OVERLAP_DISTANCE * unit
    return means


def generate_toy(seed: int, n: int, num_classes: int) -> LocalDataset:
    """Sample a balanced K-class 2D Gaussian-blob dataset.

    Class counts are balanced to within one sample; the draw is a pure
    function of ``seed``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if num_classes < 1:
        raise ValueError("num_classes must be at least 1")
    rng = np.random.default_rng(seed)
    means = toy_blob_means(num_classes)
    counts = np.full(num_classes, n // num_classes, dtype=int)
    counts[: n % num_classes] += 1
    feats, labels = [], []
    for k in range(num_classes):
        feats.append(means[k] + TOY_BLOB_SIGMA * rng.standard_normal((counts[k], 2)))
        labels.append(np.full(counts[k], k, dtype=np.int64))
    if n == 0:
        return LocalDataset(np.zeros((0, 2)), np.zeros(0, dtype=np.int64), (), num_classes)
    features = np.concatenate(feats)
    labels = np.concatenate(labels)
    order = rng.permutation(n)
    space = tuple(k for k in range(num_classes) if counts[k] > 0)
    return LocalDataset(features[order], labels[order], space, num_classes)


def split_train_test(ds: LocalDataset, ratio: float, seed: int) -> tuple[LocalDataset, LocalDataset]:
    """Class-stratified split into (train, test), deterministic per seed."""
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio {ratio} outside (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in ds.label_space:
        idx = np.where(ds.labels == c)[0]
        if len(idx) < 2:
            raise ValueError(f"class {c} has {len(idx)} sample(s); need at least 2 to split")
        rng.shuffle(idx)
        n_train = int(len(idx) * ratio + 0.5)
        n_train = min(max(n_train, 1), len(idx) - 1)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx), ds.subset(test_idx)


def partition(ds: LocalDataset, spec: PartitionSpec) -> list[LocalDataset]:
    """Split a dataset into label-biased party shards.

    Each party receives its rule's share of every class it claims; samples are
    never duplicated across shards. Classes absent from every rule would be
    globally unlearnable and are rejected.
    """
    missing = set(range(ds.num_classes)) - spec.covered_classes
    if missing:
        raise ValueError(f"classes {sorted(missing)} not assigned to any party")
    rng = np.random.default_rng(spec.seed)
    shard_indices: list[list[np.ndarray]] = [[] for _ in spec.parties]
    for c in sorted(spec.covered_classes):
        idx = np.where(ds.labels == c)[0]
        rng.shuffle(idx)
        claimants = [(i, r.fraction) for i, r in enumerate(spec.parties) if c in r.classes]
        fractions = np.array([f for _, f in claimants])
        bounds = np.rint(np.cumsum(fractions) * len(idx)).astype(int)
        start = 0
        for (party, _), stop in zip(claimants, bounds):
            shard_indices[party].append(idx[start:stop])
            start = stop
    shards = []
    for i, (chunks, rule) in enumerate(zip(shard_indices, spec.parties)):
        index = np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=int)
        if len(index) == 0:
            raise ValueError(f"parties[{i}]: empty shard (classes {rule.classes})")
        shards.append(ds.subset(index, label_space=tuple(sorted(rule.classes))))
    return shards


def write_csv(ds: LocalDataset, path) -> None:
    """Write ``f0,...,f{d-1},label`` rows with full round-trip float precision."""
    d = ds.dim
    with open(path, "w") as fh:
        fh.write(",".join([f"f{i}" for i in range(d)] + ["label"]) + "\n")
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.features[i]]
            row.append(str(int(ds.labels[i])))
            fh.write(",".join(row) + "\n")


def read_csv(path, num_classes: int | None = None) -> LocalDataset:
    """Read a dataset written by ``write_csv``.

    ``num_classes`` defaults to max(label)+1. Malformed rows raise ValueError
    naming the offending line.
    """
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError("line 1: missing header")
        cols = header.split(",")
        if cols[-1] != "label" or any(c != f"f{i}" for i, c in enumerate(cols[:-1])):
            raise ValueError(f"line 1: unexpected header {header!r}")
        dim = len(cols) - 1
        feats, labels = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != dim + 1:
                raise ValueError(f"line {lineno}: expected {dim + 1} fields, got {len(parts)}")
            try:
                feats.append([float(v) for v in parts[:-1]])
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric feature in {line!r}") from None
            try:
                labels.append(int(parts[-1]))
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer label {parts[-1]!r}") from None
    features = np.array(feats, dtype=np.float64).reshape(len(feats), dim)
    label_arr = np.array(labels, dtype=np.int64)
    space = tuple(sorted(set(labels)))
    if num_classes is None:
        num_classes = (max(labels) + 1) if labels else 0
    return LocalDataset(features, label_arr, space, num_classes)
