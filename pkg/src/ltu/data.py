"""Datasets, the forget/remain partition, and support/query set construction.

Examples keep an integer ``ids`` array recording their row in the source
dataset, so subset and disjointness checks work on identity rather than on
feature values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._rng import child_seeds
from .diffnum import ModelSpec, embed


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    ids: np.ndarray = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError(f"features must be a 2-d array, got shape {self.X.shape}")
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.shape != (self.X.shape[0],):
            raise ValueError(f"{self.X.shape[0]} rows but labels of shape {self.y.shape}")
        if self.ids is None:
            self.ids = np.arange(self.X.shape[0], dtype=np.int64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.n_classes < 1:
            raise ValueError("need at least one class")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError(f"labels outside [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def label_space(self) -> np.ndarray:
        return np.arange(self.n_classes)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.n_classes, self.ids[idx])

    def concat(self, other: "Dataset") -> "Dataset":
        if other.n_classes != self.n_classes or other.dim != self.dim:
            raise ValueError("cannot concatenate datasets of different shape")
        return Dataset(
            np.vstack([self.X, other.X]),
            np.concatenate([self.y, other.y]),
            self.n_classes,
            np.concatenate([self.ids, other.ids]),
        )


@dataclass
class UnlearnSplit:
    forget: Dataset
    remain: Dataset
    remain_subset: Dataset
    test: Dataset
    rho: float

    @property
    def n_classes(self) -> int:
        return self.remain.n_classes


# ---------------------------------------------------------------------------
# generation and I/O
# ---------------------------------------------------------------------------


def gen_blobs(n_per_class: int, n_classes: int, dim: int, spread: float, seed) -> Dataset:
    """Isotropic Gaussian clusters.

    For ``dim == 2`` the centres sit evenly on the unit circle; otherwise
    they are random unit vectors. Every point gets Gaussian noise of
    standard deviation ``spread``.
    """
    if n_per_class < 1 or n_classes < 1 or dim < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    if dim == 2:
        ang = 2 * np.pi * np.arange(n_classes) / n_classes
        centers = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        centers = rng.normal(size=(n_classes, dim))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = centers[y] + spread * rng.normal(size=(y.shape[0], dim))
    perm = rng.permutation(y.shape[0])
    return Dataset(X[perm], y[perm], n_classes)


def gen_moons(n: int, noise: float, seed) -> Dataset:
    """Two interleaving half circles, labels 0/1."""
    if n < 2:
        raise ValueError("need at least two points")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = np.pi * rng.uniform(size=n0)
    t1 = np.pi * rng.uniform(size=n1)
    outer = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    inner = np.stack([1 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    X = np.vstack([outer, inner]) + noise * rng.normal(size=(n, 2))
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], 2)


def save_csv(ds: Dataset, path, header: bool = False) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        if header:
            w.writerow([f"x{i}" for i in range(ds.dim)] + ["label"])
        for x, y in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_csv(path, n_classes: int | None = None) -> Dataset:
    """Read ``d`` reals followed by an integer label per row.

    A header is skipped when the first token of the first row is not
    numeric. ``n_classes`` defaults to ``max(label) + 1``.
    """
    rows, labels = [], []
    width = None
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not t.strip() for t in row):
                continue
            if lineno == 1 and not _is_number(row[0].strip()):
                continue
            if len(row) < 2:
                raise DataFormatError(f"{path}:{lineno}: need at least one feature and a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {width} columns, found {len(row)}"
                )
            try:
                feats = [float(t) for t in row[:-1]]
                label = float(row[-1])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if label != int(label) or label < 0:
                raise DataFormatError(f"{path}:{lineno}: label {row[-1]!r} is not a class index")
            rows.append(feats)
            labels.append(int(label))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    y = np.asarray(labels, dtype=np.int64)
    C = int(y.max()) + 1 if n_classes is None else n_classes
    return Dataset(np.asarray(rows), y, C)


# ---------------------------------------------------------------------------
# partition
# ---------------------------------------------------------------------------


def make_split(
    ds: Dataset,
    forget_ratio: float,
    rho: float,
    seed,
    n_test: int | None = None,
    test_ratio: float = 0.2,
    n_train: int | None = None,
) -> UnlearnSplit:
    """Hold out a test set, then carve the training rows into forget/remain.

    The test set takes ``n_test`` rows (or ``round(test_ratio * len(ds))``);
    the training set the next ``n_train`` rows (default: all the rest).
    ``|forget| = round(forget_ratio * |train|)`` drawn uniformly without
    replacement, and ``|remain_subset| = round(rho * |remain|)``.
    """
    if not 0 < forget_ratio < 1:
        raise ValueError(f"forget_ratio must be in (0, 1), got {forget_ratio}")
    if not 0 < rho < 1:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ds))
    if n_test is None:
        n_test = int(round(test_ratio * len(ds)))
    test_idx = perm[:n_test]
    train_idx = perm[n_test:] if n_train is None else perm[n_test : n_test + n_train]
    if n_test < 1 or len(train_idx) < 2:
        raise ValueError("split leaves an empty test or training set")
    if n_train is not None and len(train_idx) < n_train:
        raise ValueError(f"dataset too small for {n_test} test + {n_train} train rows")

    n_forget = int(round(forget_ratio * len(train_idx)))
    if n_forget < 1 or n_forget >= len(train_idx):
        raise ValueError("forget_ratio leaves an empty forget or remain set")
    shuffled = rng.permutation(train_idx)
    forget_idx = np.sort(shuffled[:n_forget])
    remain_idx = np.sort(shuffled[n_forget:])
    n_sub = int(round(rho * len(remain_idx)))
    if n_sub < 1:
        raise ValueError("rho leaves an empty remain subset")
    sub_idx = np.sort(rng.choice(remain_idx, size=n_sub, replace=False))
    return UnlearnSplit(
        forget=ds.take(forget_idx),
        remain=ds.take(remain_idx),
        remain_subset=ds.take(sub_idx),
        test=ds.take(np.sort(test_idx)),
        rho=rho,
    )


# ---------------------------------------------------------------------------
# support and query sets
# ---------------------------------------------------------------------------


@dataclass
class SupportSet:
    X: np.ndarray
    assigned: np.ndarray
    original: np.ndarray
    ids: np.ndarray
    n_classes: int

    def __len__(self) -> int:
        return self.X.shape[0]

    def as_dataset(self) -> Dataset:
        return Dataset(self.X, self.assigned, self.n_classes, self.ids)


def build_support(forget: Dataset, seed) -> SupportSet:
    """Relabel every forget example with a uniform label other than its own."""
    C = forget.n_classes
    if C < 2:
        raise ValueError("random relabelling needs at least two classes")
    rng = np.random.default_rng(seed)
    # uniform over the C - 1 other labels: draw an offset in 1..C-1
    offset = rng.integers(1, C, size=len(forget))
    assigned = (forget.y + offset) % C
    return SupportSet(forget.X.copy(), assigned, forget.y.copy(), forget.ids.copy(), C)


class FeatureExtractor:
    """Penultimate-layer embedding of a frozen model."""

    def __init__(self, spec: ModelSpec, params: np.ndarray):
        self.spec = spec
        self.params = np.array(params, dtype=np.float64)

    def __call__(self, X) -> np.ndarray:
        return embed(self.spec, self.params, X)


class OneHotVectorizer:
    def __init__(self, n_classes: int):
        self.n_classes = n_classes

    def __call__(self, y) -> np.ndarray:
        return np.eye(self.n_classes)[np.asarray(y, dtype=np.int64)]


def _anchors(n_forget: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``k`` forget examples: a sample when ``k <= n``, else cycled."""
    if n_forget < 1:
        raise ValueError("forget set is empty")
    if k <= n_forget:
        return rng.choice(n_forget, size=k, replace=False)
    reps = np.tile(np.arange(n_forget), k // n_forget + 1)[:k]
    return rng.permutation(reps)


def _check_k(pool: Dataset, k: int) -> None:
    if len(pool) == 0:
        raise ValueError("remain subset is empty")
    if not 1 <= k <= len(pool):
        raise ValueError(f"k={k} must be in [1, {len(pool)}]")


def sample_z1_indices(remain_subset: Dataset, forget: Dataset, extractor, k: int, seed):
    """Anchor positions in ``forget`` and nearest-neighbour positions in ``remain_subset``."""
    _check_k(remain_subset, k)
    rng = np.random.default_rng(seed)
    anchors = _anchors(len(forget), k, rng)
    A = np.ascontiguousarray(extractor(forget.X[anchors]), dtype=np.float64)
    B = np.ascontiguousarray(extractor(remain_subset.X), dtype=np.float64)
    return anchors, _kernels.nearest_index(A, B)


def sample_z1(remain_subset: Dataset, forget: Dataset, extractor, k: int, seed) -> Dataset:
    """Feature-space nearest neighbours of forget anchors (ties: lowest index)."""
    _, nn = sample_z1_indices(remain_subset, forget, extractor, k, seed)
    return remain_subset.take(nn)


def sample_z2_indices(remain_subset: Dataset, forget: Dataset, vectorizer, k: int, seed):
    _check_k(remain_subset, k)
    rng = np.random.default_rng(seed)
    anchors = _anchors(len(forget), k, rng)
    A = np.ascontiguousarray(vectorizer(forget.y[anchors]), dtype=np.float64)
    B = np.ascontiguousarray(vectorizer(remain_subset.y), dtype=np.float64)
    D = _kernels.pairwise_sqdist(A, B)
    picks = np.empty(k, dtype=np.int64)
    for r in range(k):
        ties = np.flatnonzero(D[r] == D[r].min())
        picks[r] = ties[rng.integers(len(ties))]
    return anchors, picks


def sample_z2(remain_subset: Dataset, forget: Dataset, vectorizer, k: int, seed) -> Dataset:
    """Label-space nearest neighbours of forget anchors (ties: uniform at random)."""
    _, picks = sample_z2_indices(remain_subset, forget, vectorizer, k, seed)
    return remain_subset.take(picks)


def sample_z3(remain_subset: Dataset, k: int, seed) -> Dataset:
    _check_k(remain_subset, k)
    rng = np.random.default_rng(seed)
    return remain_subset.take(rng.choice(len(remain_subset), size=k, replace=False))


@dataclass
class QueryBundle:
    query_sets: list[Dataset]
    provenance: list[str] = field(default_factory=lambda: ["feature_nn", "label_nn", "random"])

    def __len__(self) -> int:
        return len(self.query_sets)


def build_query_bundle(split: UnlearnSplit, extractor, vectorizer, k: int, seed) -> QueryBundle:
    s1, s2, s3 = child_seeds(seed, 3)
    sub, forget = split.remain_subset, split.forget
    return QueryBundle(
        [
            sample_z1(sub, forget, extractor, k, s1),
            sample_z2(sub, forget, vectorizer, k, s2),
            sample_z3(sub, k, s3),
        ]
    )
