"""Spectral view embeddings and their merger into a single representative subspace.

Each view's normalized Laplacian is embedded by its k lowest eigenvectors
(the trace-minimizing orthonormal basis). Subspaces are compared with the
squared projection distance on the Grassmann manifold, and all views are
merged by eigendecomposing

    L_mod = sum_i L_i - sum_i alpha_i * U_i U_i^T

whose k lowest eigenvectors are the merged basis: the quadratic term keeps
the basis smooth on every view while the rank-k corrections pull it toward
the individual view subspaces.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import MultiViewGraph, normalized_laplacian

# Above this size, sparse inputs go to the iterative solver instead of LAPACK.
DENSE_EIG_LIMIT = 2000
_EIG_TOL = 1e-10
_EIG_MAXITER = 5000
_ORTHO_TOL = 1e-8
_SYM_TOL = 1e-10


class EigensolverError(RuntimeError):
    """Iterative eigensolver failed to converge; carries run diagnostics."""

    def __init__(self, message, *, n=None, k=None, iterations=None, converged=None):
        self.n = n
        self.k = k
        self.iterations = iterations
        self.converged = converged
        detail = f" (n={n}, k={k}, iterations={iterations}, converged={converged})"
        super().__init__(message + detail)


@dataclass(frozen=True)
class SpectralEmbedding:
    """Orthonormal n x k basis of a Laplacian's k lowest eigenvectors."""

    U: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        vals = np.asarray(self.eigenvalues, dtype=np.float64)
        if U.ndim != 2 or vals.shape != (U.shape[1],):
            raise ValueError(f"inconsistent shapes U={U.shape}, eigenvalues={vals.shape}")
        gram_err = np.abs(U.T @ U - np.eye(U.shape[1])).max()
        if gram_err > _ORTHO_TOL:
            raise ValueError(f"basis not orthonormal (|U'U - I| = {gram_err:.3g})")
        if np.any(np.diff(vals) < -1e-10):
            raise ValueError("eigenvalues must be ascending")
        if vals.size and (vals[0] < -_ORTHO_TOL or vals[-1] > 2 + _ORTHO_TOL):
            raise ValueError(f"Laplacian eigenvalues outside [0, 2]: {vals}")
        U.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "eigenvalues", vals)

    @property
    def k(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class FusionConfig:
    """Embedding dimension and per-view regularization weights."""

    k: int
    alphas: tuple

    def __init__(self, k: int, alphas):
        alphas = tuple(float(a) for a in alphas)
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if any(a < 0 for a in alphas):
            raise ValueError(f"alphas must be non-negative, got {alphas}")
        object.__setattr__(self, "k", int(k))
        object.__setattr__(self, "alphas", alphas)


@dataclass(frozen=True)
class ModifiedLaplacian:
    """Merged operator L_mod with its k lowest-eigenvector basis."""

    L_mod: np.ndarray
    U_merged: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L_mod, dtype=np.float64)
        U = np.asarray(self.U_merged, dtype=np.float64)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError(f"L_mod must be square, got {L.shape}")
        if not np.isfinite(L).all() or not np.isfinite(U).all():
            raise ValueError("non-finite entries in merged Laplacian")
        sym_err = np.abs(L - L.T).max()
        if sym_err > _SYM_TOL * max(1.0, np.abs(L).max()):
            raise ValueError(f"L_mod not symmetric (|L - L'| = {sym_err:.3g})")
        if U.shape[0] != L.shape[0]:
            raise ValueError(f"U_merged rows {U.shape[0]} != n {L.shape[0]}")
        gram_err = np.abs(U.T @ U - np.eye(U.shape[1])).max()
        if gram_err > _ORTHO_TOL:
            raise ValueError(f"U_merged not orthonormal (|U'U - I| = {gram_err:.3g})")
        L.setflags(write=False)
        U.setflags(write=False)
        object.__setattr__(self, "L_mod", L)
        object.__setattr__(self, "U_merged", U)

    @property
    def n(self) -> int:
        return self.L_mod.shape[0]

    @property
    def k(self) -> int:
        return self.U_merged.shape[1]


def smallest_eigenpairs(L, k: int, *, maxiter: int = _EIG_MAXITER, tol: float = _EIG_TOL):
    """The k algebraically smallest eigenpairs of a symmetric matrix.

    Dense inputs (and sparse ones up to DENSE_EIG_LIMIT) use LAPACK; larger
    sparse matrices use shift-invert Lanczos with a deterministic start
    vector. Returns (eigenvalues ascending, n x k eigenvector matrix).
    """
    n = L.shape[0]
    if L.shape[0] != L.shape[1]:
        raise ValueError(f"matrix must be square, got {L.shape}")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if sp.issparse(L):
        asym = abs(L - L.T)
        sym_err = asym.max() if asym.nnz else 0.0
    else:
        sym_err = np.abs(L - L.T).max()
    if sym_err > 1e-8:
        raise ValueError(f"matrix not symmetric (|L - L'| = {sym_err:.3g})")

    if not sp.issparse(L) or n <= DENSE_EIG_LIMIT or k >= n - 1:
        dense = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=np.float64)
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=(0, k - 1))
        return vals, vecs
    return _block_shift_invert(L, k, maxiter, tol)


def _block_shift_invert(L, k, maxiter, tol):
    """Block inverse iteration with Rayleigh-Ritz extraction.

    A block method is required here: graph Laplacians routinely carry the
    zero eigenvalue with multiplicity far above k (one per component), and a
    single-vector Krylov solver cannot resolve a degenerate invariant
    subspace. The positive shift keeps the factorized matrix well away from
    singular, and per-column residuals bound each eigenvalue error directly,
    so convergence at tolerance t certifies eigenvalues to within t.
    """
    n = L.shape[0]
    sigma = 0.1
    shifted = (L + sigma * sp.identity(n, format="csr")).tocsc()
    solve = spla.splu(shifted).solve
    block = min(n, k + 8)  # oversampling pushes boundary rotation out of the answer
    X = np.random.default_rng(0x5EED).standard_normal((n, block))
    X, _ = np.linalg.qr(X)
    scale = max(1.0, float(abs(L).sum(axis=0).max()))
    best_resid = np.inf
    for iteration in range(1, maxiter + 1):
        X, _ = np.linalg.qr(solve(X))
        ritz = X.T @ (L @ X)
        ritz = (ritz + ritz.T) / 2.0
        theta, W = scipy.linalg.eigh(ritz)
        X = X @ W
        resid = np.linalg.norm(L @ X[:, :k] - X[:, :k] * theta[:k], axis=0)
        best_resid = min(best_resid, float(resid.max()))
        if resid.max() <= tol * scale:
            return theta[:k], X[:, :k]
    raise EigensolverError(
        "eigensolver did not converge",
        n=n,
        k=k,
        iterations=maxiter,
        converged=int((resid <= tol * scale).sum()),
    )


def spectral_embedding(L, k: int, *, maxiter: int = _EIG_MAXITER, tol: float = _EIG_TOL) -> SpectralEmbedding:
    """Trace-minimizing orthonormal embedding of a normalized Laplacian.

    The returned basis attains min tr(U'LU) over orthonormal U, i.e. the sum
    of the k smallest eigenvalues of L.
    """
    vals, vecs = smallest_eigenpairs(L, k, maxiter=maxiter, tol=tol)
    return SpectralEmbedding(U=vecs, eigenvalues=vals)


def projection_distance_sq(Y1: np.ndarray, Y2: np.ndarray) -> float:
    """Squared projection distance k - ||Y1'Y2||_F^2 between two subspaces.

    Equals sum(sin^2 theta_i) over the principal angles between the column
    spans; symmetric, zero iff the spans coincide, at most k.
    """
    Y1 = np.asarray(Y1, dtype=np.float64)
    Y2 = np.asarray(Y2, dtype=np.float64)
    if Y1.shape != Y2.shape:
        raise ValueError(f"shape mismatch: {Y1.shape} vs {Y2.shape}")
    k = Y1.shape[1]
    cross = Y1.T @ Y2
    val = k - float(np.sum(cross * cross))
    return val if val > 0.0 else 0.0


def multi_view_distance_sq(U: np.ndarray, Us) -> float:
    """Sum of squared projection distances from U to each basis in Us."""
    return float(sum(projection_distance_sq(U, Ui) for Ui in Us))


def merge_views(
    g: MultiViewGraph,
    cfg: FusionConfig,
    *,
    return_embeddings: bool = False,
):
    """Merge all view Laplacians into a ModifiedLaplacian.

    Computes per-view normalized Laplacians and spectral embeddings, then
    L_mod = sum_i L_i - sum_i alpha_i U_i U_i' and its k lowest eigenvectors.
    With every alpha 0 the result is exactly the sum of the Laplacians.
    """
    if len(cfg.alphas) != g.num_views:
        raise ValueError(f"{len(cfg.alphas)} alphas for {g.num_views} views")
    if cfg.k > g.n:
        raise ValueError(f"k={cfg.k} exceeds vertex count {g.n}")
    laps = [normalized_laplacian(view) for view in g.views]
    embeddings = [spectral_embedding(L, cfg.k) for L in laps]
    total = laps[0]
    for L in laps[1:]:
        total = total + L
    L_mod = total.toarray()
    for alpha, emb in zip(cfg.alphas, embeddings):
        if alpha != 0.0:
            L_mod -= alpha * (emb.U @ emb.U.T)
    L_mod = (L_mod + L_mod.T) / 2.0  # symmetric up to rounding; make it exact
    _, U_merged = smallest_eigenpairs(L_mod, cfg.k)
    merged = ModifiedLaplacian(L_mod=L_mod, U_merged=U_merged)
    if return_embeddings:
        return merged, embeddings
    return merged


_LMOD_MAGIC = b"MGCNLMOD"


def save_modified_laplacian(m: ModifiedLaplacian, path) -> None:
    """Checkpoint format: 8-byte magic, uint64 n and k (little endian),
    then row-major float64 for L_mod (n*n) and U_merged (n*k)."""
    with open(path, "wb") as fh:
        fh.write(_LMOD_MAGIC)
        fh.write(struct.pack("<QQ", m.n, m.k))
        fh.write(np.ascontiguousarray(m.L_mod, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(m.U_merged, dtype="<f8").tobytes())


def load_modified_laplacian(path) -> ModifiedLaplacian:
    with open(path, "rb") as fh:
        magic = fh.read(len(_LMOD_MAGIC))
        if magic != _LMOD_MAGIC:
            raise ValueError(f"{path}: not a merged-Laplacian checkpoint (bad magic {magic!r})")
        n, k = struct.unpack("<QQ", fh.read(16))
        want = n * n + n * k
        payload = np.frombuffer(fh.read(want * 8), dtype="<f8")
        if payload.size != want:
            raise ValueError(f"{path}: truncated checkpoint ({payload.size} of {want} values)")
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    L_mod = payload[: n * n].reshape(n, n).astype(np.float64)
    U_merged = payload[n * n :].reshape(n, k).astype(np.float64)
    return ModifiedLaplacian(L_mod=L_mod, U_merged=U_merged)
