"""Centroid selection, closed-form manifold ranking, and edge augmentation.

Per centroid q the saliency of every vertex is the solution of

    (I - beta * M) f = q

solved by a monitored LU factorization, never an explicit inverse. M is the
merged operator itself (`matrix_mode="laplacian"`, the literal formula) or
its similarity reading S = I - L_mod / ||L_mod||_2 (`"similarity"`), which
keeps the system positive definite for beta < 1. The literal system can be
indefinite or nearly singular for beta near 1; when that happens the
augmentation step falls back to the similarity reading and records it.

Salient edges (top-ranked non-neighbors of a centroid) are added to the most
informative view; non-salient edges (bottom-ranked existing neighbors) are
pruned. A post-hoc checker validates the add/prune contract on every run.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .fusion import ModifiedLaplacian
from .graph import MultiViewGraph, SparseSymGraph, save_edge_tsv

MATRIX_MODES = ("laplacian", "similarity")
_COND_LIMIT = 1e12


class RankingConditionError(RuntimeError):
    """The ranking system is singular or too ill-conditioned to solve."""

    def __init__(self, rcond, mode):
        self.rcond = rcond
        self.mode = mode
        super().__init__(
            f"ranking system (mode={mode!r}) has reciprocal condition {rcond:.3g}; "
            "reduce beta or use matrix_mode='similarity'"
        )


@dataclass(frozen=True)
class RankingConfig:
    """Knobs for one augmentation run.

    num_centroids is the number of query points; add_per_centroid /
    prune_per_centroid bound how many edges each centroid contributes.
    """

    num_centroids: int
    beta: float = 0.99
    add_per_centroid: int = 5
    prune_per_centroid: int = 5
    kmeans_restarts: int = 10
    seed: int = 0
    matrix_mode: str = "laplacian"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0,1), got {self.beta}")
        if self.num_centroids < 1:
            raise ValueError(f"num_centroids must be >= 1, got {self.num_centroids}")
        if self.add_per_centroid < 0 or self.prune_per_centroid < 0:
            raise ValueError("add/prune counts must be >= 0")
        if self.kmeans_restarts < 1:
            raise ValueError(f"kmeans_restarts must be >= 1, got {self.kmeans_restarts}")
        if self.matrix_mode not in MATRIX_MODES:
            raise ValueError(f"matrix_mode must be one of {MATRIX_MODES}, got {self.matrix_mode!r}")


@dataclass(frozen=True, eq=False)
class MergedGraph:
    """Augmented adjacency plus the evidence that produced it."""

    A_mod: SparseSymGraph
    E_s: tuple
    E_ns: tuple
    centroids: tuple
    scores: np.ndarray  # one ranking vector per centroid, row order = centroids
    matrix_mode_used: str = "laplacian"

    def __post_init__(self):
        es, ens = set(self.E_s), set(self.E_ns)
        if es & ens:
            raise ValueError(f"E_s and E_ns overlap: {sorted(es & ens)[:5]}")
        present = self.A_mod.edge_pairs()
        if not es <= present:
            raise ValueError("some salient edges missing from A_mod")
        if ens & present:
            raise ValueError("some pruned edges still present in A_mod")


def _kmeans_once(rows: np.ndarray, K: int, rng: np.random.Generator):
    """Lloyd's algorithm with k-means++ seeding; deterministic given rng."""
    n = rows.shape[0]
    centers = np.empty((K, rows.shape[1]))
    first = int(rng.integers(n))
    centers[0] = rows[first]
    d2 = ((rows - centers[0]) ** 2).sum(axis=1)
    for j in range(1, K):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            pick = int(rng.choice(n, p=probs))
        else:
            pick = int(np.argmin(d2))  # all remaining points coincide
        centers[j] = rows[pick]
        d2 = np.minimum(d2, ((rows - centers[j]) ** 2).sum(axis=1))

    row_sq = (rows**2).sum(axis=1)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(300):
        dists = row_sq[:, None] - 2.0 * (rows @ centers.T) + (centers**2).sum(axis=1)[None, :]
        new_assign = np.argmin(dists, axis=1)  # ties resolve to lowest center index
        for j in range(K):
            members = new_assign == j
            if members.any():
                centers[j] = rows[members].mean(axis=0)
            else:
                # Re-seed an emptied cluster at the worst-served point.
                worst = int(np.argmax(dists[np.arange(n), new_assign]))
                centers[j] = rows[worst]
                new_assign[worst] = j
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    wcss = float(((rows - centers[assign]) ** 2).sum())
    return assign, centers, wcss


def select_centroids(m: ModifiedLaplacian, K: int, seed: int, *, restarts: int = 1):
    """K representative vertices from k-means over the merged embedding rows.

    Rows are normalized to unit length (zero rows stay zero). The best of
    `restarts` seeded runs by within-cluster sum of squares wins, and each
    cluster is represented by its member nearest the cluster mean. Returns
    ascending vertex indices; deterministic given seed.
    """
    if K > m.n:
        raise ValueError(f"K={K} exceeds vertex count {m.n}")
    rows = m.U_merged.copy()
    norms = np.linalg.norm(rows, axis=1)
    nz = norms > 0
    rows[nz] /= norms[nz, None]
    distinct = np.unique(rows, axis=0).shape[0]
    if K > distinct:
        raise ValueError(f"K={K} exceeds the {distinct} distinct embedding rows")

    children = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for child in children:
        result = _kmeans_once(rows, K, np.random.default_rng(child))
        if best is None or result[2] < best[2]:
            best = result
    assign, centers, _ = best

    chosen = []
    for j in range(K):
        members = np.flatnonzero(assign == j)
        diffs = rows[members] - centers[j]
        local = int(np.argmin((diffs**2).sum(axis=1)))  # ties -> lowest index
        chosen.append(int(members[local]))
    return sorted(chosen)


class _RankingSolver:
    """LU factorization of (I - beta*M) with a condition-number gate."""

    def __init__(self, m: ModifiedLaplacian, beta: float, mode: str):
        if mode not in MATRIX_MODES:
            raise ValueError(f"matrix_mode must be one of {MATRIX_MODES}, got {mode!r}")
        if not 0.0 <= beta < 1.0:
            raise ValueError(f"beta must be in [0,1), got {beta}")
        n = m.n
        if mode == "laplacian":
            system = np.eye(n) - beta * m.L_mod
        else:
            norm = _spectral_norm(m.L_mod)
            scaled = m.L_mod / norm if norm > 0 else np.zeros_like(m.L_mod)
            # I - beta*(I - L/||L||) = (1-beta) I + beta * L/||L||
            system = (1.0 - beta) * np.eye(n) + beta * scaled
        self.mode = mode
        anorm = np.abs(system).sum(axis=0).max()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                self._lu, self._piv = scipy.linalg.lu_factor(system)
        except scipy.linalg.LinAlgError:
            raise RankingConditionError(0.0, mode) from None
        rcond = float(lapack.dgecon(self._lu, anorm, norm="1")[0]) if anorm > 0 else 0.0
        if not np.isfinite(rcond) or rcond < 1.0 / _COND_LIMIT:
            raise RankingConditionError(rcond, mode)

    def solve(self, q: np.ndarray) -> np.ndarray:
        return scipy.linalg.lu_solve((self._lu, self._piv), q)


def _spectral_norm(A: np.ndarray) -> float:
    """Largest |eigenvalue| of a symmetric matrix, deterministic."""
    if A.shape[0] == 0:
        return 0.0
    vals = scipy.linalg.eigh(A, eigvals_only=True, subset_by_index=(0, 0))
    lo = abs(float(vals[0]))
    n = A.shape[0]
    vals = scipy.linalg.eigh(A, eigvals_only=True, subset_by_index=(n - 1, n - 1))
    return max(lo, abs(float(vals[0])))


def manifold_rank(m: ModifiedLaplacian, q: np.ndarray, beta: float, *, matrix_mode: str = "laplacian") -> np.ndarray:
    """Closed-form saliency scores f = (I - beta*M)^{-1} q.

    q is typically the one-hot indicator of a single centroid. Raises
    RankingConditionError when the system is singular or its condition
    estimate exceeds 1e12.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (m.n,):
        raise ValueError(f"query vector has shape {q.shape}, expected ({m.n},)")
    return _RankingSolver(m, beta, matrix_mode).solve(q)


def _build_solver_with_fallback(m: ModifiedLaplacian, cfg: RankingConfig):
    try:
        return _RankingSolver(m, cfg.beta, cfg.matrix_mode)
    except RankingConditionError:
        if cfg.matrix_mode != "laplacian":
            raise
        return _RankingSolver(m, cfg.beta, "similarity")


def augment_graph(g: MultiViewGraph, m: ModifiedLaplacian, cfg: RankingConfig) -> MergedGraph:
    """Add salient and prune non-salient edges around each centroid.

    For each centroid: the add_per_centroid top-scoring vertices not yet
    adjacent in view 1 become salient edges, and the prune_per_centroid
    bottom-scoring existing neighbors become non-salient edges (a centroid
    with fewer neighbors prunes what it has). Score ties break toward the
    lower vertex index. The result applies both sets to view 1.
    """
    if g.n != m.n:
        raise ValueError(f"graph has n={g.n}, merged Laplacian has n={m.n}")
    base = g.views[0]
    centroids = select_centroids(m, cfg.num_centroids, cfg.seed, restarts=cfg.kmeans_restarts)
    solver = _build_solver_with_fallback(m, cfg)
    adjacency = base.adjacency_sets()

    scores = np.empty((len(centroids), g.n))
    es, ens = [], []
    es_seen, ens_seen = set(), set()
    for row, c in enumerate(centroids):
        q = np.zeros(g.n)
        q[c] = 1.0
        f = solver.solve(q)
        scores[row] = f
        others = np.array([v for v in range(g.n) if v != c], dtype=np.int64)
        # Score ties always break toward the lower vertex index.
        order_desc = others[np.lexsort((others, -f[others]))]
        added = 0
        for v in order_desc:
            if added >= cfg.add_per_centroid:
                break
            v = int(v)
            if v in adjacency[c]:
                continue
            pair = (min(c, v), max(c, v))
            if pair not in es_seen:
                es_seen.add(pair)
                es.append(pair)
            added += 1
        order_asc = others[np.lexsort((others, f[others]))]
        pruned = 0
        for v in order_asc:
            if pruned >= cfg.prune_per_centroid:
                break
            v = int(v)
            if v not in adjacency[c]:
                continue
            pair = (min(c, v), max(c, v))
            if pair not in ens_seen:
                ens_seen.add(pair)
                ens.append(pair)
            pruned += 1

    weights = {(u, v): w for u, v, w in base.edge_list()}
    for pair in es:
        weights[pair] = 1.0
    for pair in ens:
        weights.pop(pair, None)
    a_mod = SparseSymGraph(g.n, [(u, v, w) for (u, v), w in weights.items()])
    merged = MergedGraph(
        A_mod=a_mod,
        E_s=tuple(es),
        E_ns=tuple(ens),
        centroids=tuple(centroids),
        scores=scores,
        matrix_mode_used=solver.mode,
    )
    verify_augmentation(base, merged)
    return merged


def verify_augmentation(base: SparseSymGraph, merged: MergedGraph) -> None:
    """Post-hoc contract check: E_s is new, E_ns existed, and
    A_mod = (A_1 union E_s) minus E_ns with original weights preserved."""
    base_pairs = base.edge_pairs()
    es, ens = set(merged.E_s), set(merged.E_ns)
    if es & base_pairs:
        raise AssertionError("salient edges must not already exist in view 1")
    if not ens <= base_pairs:
        raise AssertionError("pruned edges must exist in view 1")
    expected = {(u, v): w for u, v, w in base.edge_list()}
    for pair in es:
        expected[pair] = 1.0
    for pair in ens:
        del expected[pair]
    actual = {(u, v): w for u, v, w in merged.A_mod.edge_list()}
    if expected != actual:
        raise AssertionError("A_mod does not equal (A_1 union E_s) minus E_ns")


def export_merged_graph(merged: MergedGraph, cfg: RankingConfig, tsv_path, json_path) -> None:
    """Write A_mod as an edge TSV plus a JSON sidecar with the provenance."""
    save_edge_tsv(merged.A_mod, tsv_path)
    sidecar = {
        "centroids": list(merged.centroids),
        "salient_edges": [list(p) for p in merged.E_s],
        "pruned_edges": [list(p) for p in merged.E_ns],
        "matrix_mode_used": merged.matrix_mode_used,
        "config": {
            "beta": cfg.beta,
            "num_centroids": cfg.num_centroids,
            "add_per_centroid": cfg.add_per_centroid,
            "prune_per_centroid": cfg.prune_per_centroid,
            "kmeans_restarts": cfg.kmeans_restarts,
            "seed": cfg.seed,
            "matrix_mode": cfg.matrix_mode,
        },
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
