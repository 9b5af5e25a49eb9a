"""Dataset loading, feature-similarity views, splits, and synthetic graphs.

A dataset directory is the neutral on-disk format:

    meta.json      {"name", "n", "num_views", "C", "F"}
    view1.tsv ...  one edge-list TSV per view (see graph.load_edge_tsv)
    features.csv   n rows of F comma-separated reals, no header
    labels.csv     "vertex,class" rows; vertices absent here are unlabeled

Loaders validate and reject rather than repair; errors carry file and line.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gcn import LabeledSplit
from .graph import MultiViewGraph, SparseSymGraph, load_edge_tsv, save_edge_tsv


class DatasetError(ValueError):
    """Invalid or inconsistent dataset content."""


@dataclass(frozen=True)
class Dataset:
    """Multi-view graph with node features and (possibly partial) labels."""

    graph: MultiViewGraph
    X: np.ndarray
    labels: np.ndarray  # -1 marks unlabeled vertices
    num_classes: int
    name: str

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        n = self.graph.n
        if X.ndim != 2 or X.shape[0] != n:
            raise DatasetError(f"feature matrix has shape {X.shape}, expected ({n}, F)")
        if not np.isfinite(X).all():
            raise DatasetError("feature matrix contains non-finite values")
        if labels.shape != (n,):
            raise DatasetError(f"labels have shape {labels.shape}, expected ({n},)")
        labeled = labels[labels >= 0]
        if labeled.size and labeled.max() >= self.num_classes:
            raise DatasetError(f"label {labeled.max()} out of range for C={self.num_classes}")
        X.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_features(self) -> int:
        return self.X.shape[1]


_META_KEYS = ("name", "n", "num_views", "C", "F")


def load_dataset(directory) -> Dataset:
    """Read and validate a dataset directory."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise DatasetError(f"{meta_path}: missing meta.json")
    with open(meta_path, "r", encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{meta_path}: invalid JSON ({exc})") from None
    for key in _META_KEYS:
        if key not in meta:
            raise DatasetError(f"{meta_path}: missing key {key!r}")
    name = str(meta["name"])
    n, num_views, C, F = (int(meta[k]) for k in ("n", "num_views", "C", "F"))
    if num_views < 1:
        raise DatasetError(f"{meta_path}: num_views must be >= 1")

    views = []
    for i in range(1, num_views + 1):
        view_path = directory / f"view{i}.tsv"
        if not view_path.is_file():
            raise DatasetError(f"{view_path}: missing view file")
        g = load_edge_tsv(view_path)
        if g.n != n:
            raise DatasetError(f"{view_path}: declares n={g.n}, meta.json says {n}")
        views.append(g)

    X = _load_features(directory / "features.csv", n, F)
    labels = _load_labels(directory / "labels.csv", n, C)
    return Dataset(graph=MultiViewGraph(n, views), X=X, labels=labels, num_classes=C, name=name)


def _load_features(path, n, F):
    if not path.is_file():
        raise DatasetError(f"{path}: missing features.csv")
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != F:
                raise DatasetError(f"{path}:{lineno}: expected {F} values, got {len(parts)}")
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric feature value") from None
            if not all(math.isfinite(x) for x in row):
                raise DatasetError(f"{path}:{lineno}: non-finite feature value")
            rows.append(row)
    if len(rows) != n:
        raise DatasetError(f"{path}: {len(rows)} feature rows for n={n} vertices")
    return np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, F))


def _load_labels(path, n, C):
    if not path.is_file():
        raise DatasetError(f"{path}: missing labels.csv")
    labels = np.full(n, -1, dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'vertex,class'")
            try:
                vertex, cls = int(parts[0]), int(parts[1])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer entry") from None
            if not 0 <= vertex < n:
                raise DatasetError(f"{path}:{lineno}: vertex {vertex} out of range for n={n}")
            if not 0 <= cls < C:
                raise DatasetError(f"{path}:{lineno}: class {cls} out of range for C={C}")
            if labels[vertex] != -1:
                raise DatasetError(f"{path}:{lineno}: duplicate label for vertex {vertex}")
            labels[vertex] = cls
    return labels


def save_dataset(d: Dataset, directory) -> None:
    """Write a dataset directory in the neutral format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": d.name,
        "n": d.n,
        "num_views": d.graph.num_views,
        "C": d.num_classes,
        "F": d.num_features,
    }
    with open(directory / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for i, view in enumerate(d.graph.views, start=1):
        save_edge_tsv(view, directory / f"view{i}.tsv")
    with open(directory / "features.csv", "w", encoding="utf-8") as fh:
        for row in d.X:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(directory / "labels.csv", "w", encoding="utf-8") as fh:
        for vertex in np.flatnonzero(d.labels >= 0):
            fh.write(f"{vertex},{d.labels[vertex]}\n")


def build_similarity_view(X, threshold: float) -> SparseSymGraph:
    """Unit-weight edges between rows whose cosine similarity exceeds threshold.

    Rows are L2-normalized first; all-zero rows have similarity 0 to
    everything by convention. Comparison is strict (> threshold).
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    norms = np.linalg.norm(X, axis=1)
    Xn = np.zeros_like(X)
    nz = norms > 0
    Xn[nz] = X[nz] / norms[nz, None]
    pairs = []
    block = 1024  # row-block matmul keeps the similarity buffer bounded
    for start in range(0, n, block):
        stop = min(start + block, n)
        sims = Xn[start:stop] @ Xn.T
        rows, cols = np.nonzero(sims > threshold)
        rows = rows + start
        keep = rows < cols  # upper triangle only; also kills self-pairs
        pairs.extend(zip(rows[keep].tolist(), cols[keep].tolist()))
    return SparseSymGraph.from_pairs(n, pairs)


def make_split(d: Dataset, per_class: int, val_size: int, test_size: int, seed: int) -> LabeledSplit:
    """Sample per_class training vertices per class, then val and test sets
    from the remaining labeled vertices. Deterministic by seed."""
    rng = np.random.default_rng(seed)
    train = []
    for cls in range(d.num_classes):
        pool = np.flatnonzero(d.labels == cls)
        if pool.size < per_class:
            raise DatasetError(
                f"class {cls} has {pool.size} labeled vertices, need {per_class}"
            )
        train.extend(rng.choice(pool, size=per_class, replace=False).tolist())
    train = np.sort(np.asarray(train, dtype=np.int64))
    remaining = np.setdiff1d(np.flatnonzero(d.labels >= 0), train)
    if remaining.size < val_size + test_size:
        raise DatasetError(
            f"{remaining.size} labeled vertices left for val+test={val_size + test_size}"
        )
    drawn = rng.choice(remaining, size=val_size + test_size, replace=False)
    val = np.sort(drawn[:val_size])
    test = np.sort(drawn[val_size:])
    return LabeledSplit(train_idx=train, val_idx=val, test_idx=test, labels=d.labels)


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-partition generator spec: one (intra, inter) probability pair
    per view, equal-size blocks, one-hot block features plus Gaussian noise."""

    n: int
    num_blocks: int
    edge_probs: tuple  # ((p_intra, p_inter), ...) one pair per view
    feature_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        probs = tuple((float(p), float(q)) for p, q in self.edge_probs)
        if self.n < 1 or self.num_blocks < 1:
            raise ValueError("n and num_blocks must be >= 1")
        if self.n % self.num_blocks != 0:
            raise ValueError(f"n={self.n} not divisible by num_blocks={self.num_blocks}")
        if not probs:
            raise ValueError("need at least one view probability pair")
        for p, q in probs:
            if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
                raise ValueError(f"probabilities must be in [0,1], got ({p}, {q})")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")
        object.__setattr__(self, "edge_probs", probs)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Sample a planted-partition multi-view dataset.

    Block labels are contiguous (vertex i belongs to block i // (n/C)).
    View v draws from a sub-seed (seed, v) so each view is reproducible in
    isolation; features use sub-seed (seed, num_views).
    """
    n, C = spec.n, spec.num_blocks
    block = np.arange(n) // (n // C)
    iu, iv = np.triu_indices(n, k=1)
    intra = block[iu] == block[iv]
    views = []
    for v, (p_intra, p_inter) in enumerate(spec.edge_probs):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(v,)))
        thresholds = np.where(intra, p_intra, p_inter)
        hit = rng.random(iu.size) < thresholds
        views.append(SparseSymGraph.from_pairs(n, zip(iu[hit].tolist(), iv[hit].tolist())))
    feat_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=spec.seed, spawn_key=(len(spec.edge_probs),))
    )
    X = np.eye(C)[block] + spec.feature_noise * feat_rng.standard_normal((n, C))
    return Dataset(
        graph=MultiViewGraph(n, views),
        X=X,
        labels=block.astype(np.int64),
        num_classes=C,
        name=f"synthetic-n{n}-c{C}-v{len(spec.edge_probs)}-s{spec.seed}",
    )
