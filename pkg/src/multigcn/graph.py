"""Sparse symmetric graphs, Laplacians, and GCN propagation operators.

Graphs are undirected and weighted, stored as one edge per unordered vertex
pair. All objects are immutable after construction; the operations below are
pure functions returning numpy / scipy.sparse results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class GraphFormatError(ValueError):
    """Malformed edge-list file. Carries the offending file and line number."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


def _as_clean_weight(w):
    w = float(w)
    if not math.isfinite(w):
        raise ValueError(f"edge weight must be finite, got {w!r}")
    if w <= 0.0:
        raise ValueError(f"edge weight must be > 0, got {w!r}")
    return w


class SparseSymGraph:
    """Undirected weighted graph on vertices 0..n-1.

    Each edge is stored once as (u, v, w) with u < v and w > 0; self-loops
    are not representable. Edge arrays are sorted by (u, v) and frozen, so
    equal graphs compare bitwise equal.
    """

    __slots__ = ("n", "_u", "_v", "_w")

    def __init__(self, n: int, edges=()):
        n = int(n)
        if n < 0:
            raise ValueError(f"vertex count must be >= 0, got {n}")
        us, vs, ws = [], [], []
        for edge in edges:
            u, v, w = edge
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop ({u},{v}) not allowed")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u},{v}) out of range for n={n}")
            if u > v:
                u, v = v, u
            us.append(u)
            vs.append(v)
            ws.append(_as_clean_weight(w))
        u_arr = np.asarray(us, dtype=np.int64)
        v_arr = np.asarray(vs, dtype=np.int64)
        w_arr = np.asarray(ws, dtype=np.float64)
        order = np.lexsort((v_arr, u_arr))
        u_arr, v_arr, w_arr = u_arr[order], v_arr[order], w_arr[order]
        if len(u_arr) > 1:
            dup = (u_arr[1:] == u_arr[:-1]) & (v_arr[1:] == v_arr[:-1])
            if dup.any():
                i = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate edge ({u_arr[i]},{v_arr[i]})")
        for arr in (u_arr, v_arr, w_arr):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "_u", u_arr)
        object.__setattr__(self, "_v", v_arr)
        object.__setattr__(self, "_w", w_arr)

    def __setattr__(self, name, value):
        raise AttributeError("SparseSymGraph is immutable")

    @property
    def u(self) -> np.ndarray:
        return self._u

    @property
    def v(self) -> np.ndarray:
        return self._v

    @property
    def w(self) -> np.ndarray:
        return self._w

    @property
    def num_edges(self) -> int:
        return len(self._u)

    def edge_list(self):
        """Edges as a list of (u, v, w) tuples, sorted by (u, v)."""
        return [(int(a), int(b), float(c)) for a, b, c in zip(self._u, self._v, self._w)]

    def edge_pairs(self):
        """Set of unordered edge pairs {(u, v)} with u < v."""
        return set(zip(self._u.tolist(), self._v.tolist()))

    def adjacency_sets(self):
        """Per-vertex neighbor sets."""
        adj = [set() for _ in range(self.n)]
        for a, b in zip(self._u.tolist(), self._v.tolist()):
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def to_csr(self) -> sp.csr_matrix:
        """Symmetric adjacency matrix in CSR form (both edge directions)."""
        row = np.concatenate([self._u, self._v])
        col = np.concatenate([self._v, self._u])
        dat = np.concatenate([self._w, self._w])
        return sp.csr_matrix((dat, (row, col)), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self._u, self._v] = self._w
        a[self._v, self._u] = self._w
        return a

    def __eq__(self, other):
        if not isinstance(other, SparseSymGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self._u, other._u)
            and np.array_equal(self._v, other._v)
            and np.array_equal(self._w, other._w)
        )

    def __hash__(self):
        return hash((self.n, self._u.tobytes(), self._v.tobytes(), self._w.tobytes()))

    def __repr__(self):
        return f"SparseSymGraph(n={self.n}, edges={self.num_edges})"

    @classmethod
    def from_pairs(cls, n, pairs, weight=1.0):
        """Build a uniformly weighted graph from (u, v) pairs."""
        return cls(n, [(u, v, weight) for u, v in pairs])


@dataclass(frozen=True)
class MultiViewGraph:
    """Shared vertex set with one SparseSymGraph per view.

    The view at index 0 is the designated most-informative layer; downstream
    edge augmentation adds to / prunes from that view only.
    """

    n: int
    views: tuple

    def __init__(self, n: int, views):
        views = tuple(views)
        if len(views) < 1:
            raise ValueError("MultiViewGraph needs at least one view")
        for i, g in enumerate(views):
            if not isinstance(g, SparseSymGraph):
                raise TypeError(f"view {i} is not a SparseSymGraph")
            if g.n != n:
                raise ValueError(f"view {i} has n={g.n}, expected {n}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "views", views)

    @property
    def num_views(self) -> int:
        return len(self.views)


def as_finite_matrix(a, name="matrix") -> np.ndarray:
    """Validate and return a 2-d float64 array with finite entries only."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def degree_vector(g: SparseSymGraph) -> np.ndarray:
    """Weighted degree per vertex; isolated vertices get 0."""
    d = np.zeros(g.n)
    np.add.at(d, g.u, g.w)
    np.add.at(d, g.v, g.w)
    return d


def normalized_laplacian(g: SparseSymGraph) -> sp.csr_matrix:
    """Symmetric normalized Laplacian D^{-1/2}(D - W)D^{-1/2}.

    Vertices of degree 0 use the convention D^{-1/2} = 0, which zeroes their
    row and column; all other diagonal entries are exactly 1. The spectrum
    lies in [0, 2].
    """
    d = degree_vector(g)
    inv_sqrt = np.zeros(g.n)
    nz = d > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(d[nz])
    off = -g.w * inv_sqrt[g.u] * inv_sqrt[g.v]
    diag_idx = np.flatnonzero(nz)
    row = np.concatenate([g.u, g.v, diag_idx])
    col = np.concatenate([g.v, g.u, diag_idx])
    dat = np.concatenate([off, off, np.ones(len(diag_idx))])
    lap = sp.csr_matrix((dat, (row, col)), shape=(g.n, g.n))
    lap.sum_duplicates()
    return lap


def renormalized_propagation(g: SparseSymGraph) -> sp.csr_matrix:
    """GCN propagation operator D~^{-1/2}(A + I)D~^{-1/2}.

    Adding the identity before normalizing keeps every degree positive and
    bounds the spectrum to [-1, 1], which keeps repeated propagation stable.
    """
    d = degree_vector(g) + 1.0  # self-loop weight 1 per vertex
    inv_sqrt = 1.0 / np.sqrt(d)
    off = g.w * inv_sqrt[g.u] * inv_sqrt[g.v]
    diag_idx = np.arange(g.n)
    row = np.concatenate([g.u, g.v, diag_idx])
    col = np.concatenate([g.v, g.u, diag_idx])
    dat = np.concatenate([off, off, 1.0 / d])
    a_hat = sp.csr_matrix((dat, (row, col)), shape=(g.n, g.n))
    a_hat.sum_duplicates()
    return a_hat


def union_views(g: MultiViewGraph) -> SparseSymGraph:
    """Edge union across views; weight is the maximum across views."""
    best = {}
    for view in g.views:
        for a, b, w in zip(view.u.tolist(), view.v.tolist(), view.w.tolist()):
            key = (a, b)
            if key not in best or w > best[key]:
                best[key] = w
    return SparseSymGraph(g.n, [(a, b, w) for (a, b), w in best.items()])


def load_edge_tsv(path) -> SparseSymGraph:
    """Read an edge-list TSV: header `n=<count>`, then `u<TAB>v[<TAB>weight]`.

    `#` starts a comment, blank lines are ignored, weights default to 1.0,
    and self-loops are dropped. Any other malformed content raises
    GraphFormatError with file and line.
    """
    n = None
    edges = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if n is None:
                if not line.startswith("n="):
                    raise GraphFormatError(path, lineno, "expected header 'n=<count>' before edges")
                try:
                    n = int(line[2:])
                except ValueError:
                    raise GraphFormatError(path, lineno, f"bad vertex count {line[2:]!r}") from None
                if n < 0:
                    raise GraphFormatError(path, lineno, f"vertex count must be >= 0, got {n}")
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise GraphFormatError(path, lineno, f"expected 2 or 3 tab-separated fields, got {len(parts)}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(path, lineno, f"bad vertex index in {line!r}") from None
            if not (0 <= u < n and 0 <= v < n):
                raise GraphFormatError(path, lineno, f"edge ({u},{v}) out of range for n={n}")
            if u == v:
                continue  # self-loops dropped at parse time
            if len(parts) == 3:
                try:
                    w = _as_clean_weight(parts[2])
                except ValueError as exc:
                    raise GraphFormatError(path, lineno, str(exc)) from None
            else:
                w = 1.0
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphFormatError(path, lineno, f"duplicate edge ({u},{v})")
            seen.add(key)
            edges.append((u, v, w))
    if n is None:
        raise GraphFormatError(path, 0, "missing header 'n=<count>'")
    return SparseSymGraph(n, edges)


def save_edge_tsv(g: SparseSymGraph, path) -> None:
    """Write the edge-list TSV format read by load_edge_tsv."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n={g.n}\n")
        for u, v, w in g.edge_list():
            fh.write(f"{u}\t{v}\t{w!r}\n")
