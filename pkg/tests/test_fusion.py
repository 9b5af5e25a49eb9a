import numpy as np
import pytest

from multigcn.fusion import (
    EigensolverError,
    FusionConfig,
    ModifiedLaplacian,
    SpectralEmbedding,
    load_modified_laplacian,
    merge_views,
    multi_view_distance_sq,
    projection_distance_sq,
    save_modified_laplacian,
    smallest_eigenpairs,
    spectral_embedding,
)
from multigcn.graph import MultiViewGraph, SparseSymGraph, normalized_laplacian

from conftest import random_graph, random_orthonormal


def principal_angle_distance_sq(Y1, Y2):
    """Independent oracle: sum of sin^2 of principal angles via SVD."""
    sigma = np.clip(np.linalg.svd(Y1.T @ Y2, compute_uv=False), 0.0, 1.0)
    return float(np.sum(np.sin(np.arccos(sigma)) ** 2))


def fusion_objective(U, laplacians, bases, alphas):
    """Smoothness-plus-subspace-distance objective, computed term by term."""
    total = 0.0
    for L, basis, alpha in zip(laplacians, bases, alphas):
        total += float(np.trace(U.T @ (L @ U))) + alpha * projection_distance_sq(U, basis)
    return total


class TestSpectralEmbedding:
    def test_zero_trace_with_enough_components(self):
        g = SparseSymGraph.from_pairs(6, [(0, 1), (2, 3), (4, 5)])
        emb = spectral_embedding(normalized_laplacian(g), 3)
        L = normalized_laplacian(g).toarray()
        assert abs(np.trace(emb.U.T @ L @ emb.U)) < 1e-10

    def test_full_basis_trace_equals_matrix_trace(self, rng):
        g = random_graph(12, 0.4, rng, weighted=True)
        L = normalized_laplacian(g)
        emb = spectral_embedding(L, 12)
        assert abs(np.trace(emb.U.T @ L.toarray() @ emb.U) - L.toarray().trace()) < 1e-8

    def test_matches_dense_oracle(self, rng):
        g = random_graph(50, 0.15, rng, weighted=True)
        L = normalized_laplacian(g)
        emb = spectral_embedding(L, 5)
        oracle = np.sort(np.linalg.eigvalsh(L.toarray()))[:5]
        got = np.trace(emb.U.T @ (L @ emb.U))
        assert abs(got - oracle.sum()) < 1e-8
        assert np.allclose(emb.eigenvalues, oracle, atol=1e-8)

    def test_orthonormal_and_ascending(self, rng):
        g = random_graph(40, 0.2, rng)
        emb = spectral_embedding(normalized_laplacian(g), 7)
        assert np.abs(emb.U.T @ emb.U - np.eye(7)).max() < 1e-10
        assert (np.diff(emb.eigenvalues) >= -1e-12).all()

    def test_sparse_iterative_path_matches_dense_oracle(self, rng):
        g = random_graph(2100, 0.002, rng)
        L = normalized_laplacian(g)
        emb = spectral_embedding(L, 4)
        oracle = np.sort(np.linalg.eigvalsh(L.toarray()))[:4]
        got = float(np.trace(emb.U.T @ (L @ emb.U)))
        assert abs(got - oracle.sum()) < 1e-8

    def test_k_out_of_range(self, rng):
        g = random_graph(5, 0.5, rng)
        with pytest.raises(ValueError, match="k must be"):
            spectral_embedding(normalized_laplacian(g), 6)
        with pytest.raises(ValueError, match="k must be"):
            spectral_embedding(normalized_laplacian(g), 0)

    def test_nonconvergence_raises_with_diagnostics(self, rng):
        # A path graph has a glacial spectral gap; one Arnoldi restart at an
        # impossible tolerance cannot converge 25 pairs.
        g = SparseSymGraph.from_pairs(2500, [(i, i + 1) for i in range(2499)])
        L = normalized_laplacian(g)
        with pytest.raises(EigensolverError, match="converge"):
            spectral_embedding(L, 25, maxiter=1, tol=1e-30)

    def test_rejects_asymmetric_input(self):
        bad = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            smallest_eigenpairs(bad, 1)


class TestProjectionDistance:
    def test_identical_subspaces(self, rng):
        Y = random_orthonormal(8, 3, rng)
        assert projection_distance_sq(Y, Y) == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_subspaces(self):
        eye = np.eye(4)
        assert projection_distance_sq(eye[:, :2], eye[:, 2:]) == pytest.approx(2.0)

    def test_matches_principal_angle_oracle(self, rng):
        for _ in range(25):
            Y1 = random_orthonormal(10, 3, rng)
            Y2 = random_orthonormal(10, 3, rng)
            assert projection_distance_sq(Y1, Y2) == pytest.approx(
                principal_angle_distance_sq(Y1, Y2), abs=1e-8
            )

    def test_symmetry(self, rng):
        Y1 = random_orthonormal(12, 4, rng)
        Y2 = random_orthonormal(12, 4, rng)
        assert projection_distance_sq(Y1, Y2) == pytest.approx(
            projection_distance_sq(Y2, Y1), abs=1e-12
        )

    def test_rotation_invariance(self, rng):
        Y1 = random_orthonormal(12, 4, rng)
        Y2 = random_orthonormal(12, 4, rng)
        R = random_orthonormal(4, 4, rng)
        assert projection_distance_sq(Y1 @ R, Y2) == pytest.approx(
            projection_distance_sq(Y1, Y2), abs=1e-10
        )

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="shape"):
            projection_distance_sq(random_orthonormal(8, 3, rng), random_orthonormal(8, 2, rng))

    def test_range(self, rng):
        for _ in range(10):
            Y1 = random_orthonormal(9, 4, rng)
            Y2 = random_orthonormal(9, 4, rng)
            d = projection_distance_sq(Y1, Y2)
            assert 0.0 <= d <= 4.0


class TestMultiViewDistance:
    def test_single_identical_view(self, rng):
        U = random_orthonormal(10, 3, rng)
        assert multi_view_distance_sq(U, [U]) == pytest.approx(0.0, abs=1e-12)

    def test_decomposes_into_pairwise_sum(self, rng):
        U = random_orthonormal(10, 3, rng)
        Us = [random_orthonormal(10, 3, rng) for _ in range(3)]
        direct = sum(projection_distance_sq(U, Ui) for Ui in Us)
        assert multi_view_distance_sq(U, Us) == pytest.approx(direct, abs=1e-12)

    def test_against_trace_formula(self, rng):
        U = random_orthonormal(8, 2, rng)
        Us = [random_orthonormal(8, 2, rng) for _ in range(3)]
        k, M = 2, 3
        oracle = k * M - sum(np.trace(U @ U.T @ Ui @ Ui.T) for Ui in Us)
        assert multi_view_distance_sq(U, Us) == pytest.approx(float(oracle), abs=1e-10)


class TestMergeViews:
    def test_single_view_zero_alpha_is_the_laplacian(self, rng):
        g = random_graph(15, 0.3, rng, weighted=True)
        mv = MultiViewGraph(15, [g])
        merged = merge_views(mv, FusionConfig(k=3, alphas=[0.0]))
        assert np.array_equal(merged.L_mod, normalized_laplacian(g).toarray())

    def test_all_zero_alphas_sum_laplacians(self, rng):
        a = random_graph(12, 0.3, rng)
        b = random_graph(12, 0.3, rng)
        mv = MultiViewGraph(12, [a, b])
        merged = merge_views(mv, FusionConfig(k=3, alphas=[0.0, 0.0]))
        expected = normalized_laplacian(a).toarray() + normalized_laplacian(b).toarray()
        assert np.array_equal(merged.L_mod, expected)

    def test_identical_views_formula_and_subspace(self, rng):
        # Graph chosen so the k-th eigengap is clearly positive, making the
        # rank-k projector unique and the oracle comparison meaningful.
        g = random_graph(16, 0.35, rng, weighted=True)
        L = normalized_laplacian(g).toarray()
        vals = np.linalg.eigvalsh(L)
        k = 3
        assert vals[k] - vals[k - 1] > 1e-6
        alpha = 0.7
        mv = MultiViewGraph(16, [g, g])
        merged = merge_views(mv, FusionConfig(k=k, alphas=[alpha, alpha]))
        _, vecs = np.linalg.eigh(L)
        U1 = vecs[:, :k]
        expected = 2.0 * L - 2.0 * alpha * (U1 @ U1.T)
        assert np.abs(merged.L_mod - expected).max() < 1e-8
        assert projection_distance_sq(merged.U_merged, U1) < 1e-6

    def test_merged_basis_minimizes_objective(self, rng):
        a = random_graph(40, 0.12, rng, weighted=True)
        b = random_graph(40, 0.12, rng, weighted=True)
        mv = MultiViewGraph(40, [a, b])
        cfg = FusionConfig(k=4, alphas=[0.6, 0.4])
        merged, embeddings = merge_views(mv, cfg, return_embeddings=True)
        laps = [normalized_laplacian(v).toarray() for v in mv.views]
        bases = [e.U for e in embeddings]
        best = fusion_objective(merged.U_merged, laps, bases, cfg.alphas)
        for candidate in bases:
            assert best <= fusion_objective(candidate, laps, bases, cfg.alphas) + 1e-9
        for _ in range(5):
            random_candidate = random_orthonormal(40, 4, rng)
            assert best <= fusion_objective(random_candidate, laps, bases, cfg.alphas) + 1e-9

    def test_invariants(self, rng):
        a = random_graph(20, 0.2, rng)
        b = random_graph(20, 0.2, rng)
        merged = merge_views(MultiViewGraph(20, [a, b]), FusionConfig(k=5, alphas=[0.5, 0.5]))
        assert np.abs(merged.L_mod - merged.L_mod.T).max() <= 1e-10
        gram = merged.U_merged.T @ merged.U_merged
        assert np.abs(gram - np.eye(5)).max() < 1e-8

    def test_alpha_count_mismatch(self, rng):
        g = random_graph(10, 0.3, rng)
        with pytest.raises(ValueError, match="alphas"):
            merge_views(MultiViewGraph(10, [g]), FusionConfig(k=2, alphas=[0.5, 0.5]))

    def test_config_validation(self):
        with pytest.raises(ValueError, match="k must be"):
            FusionConfig(k=0, alphas=[0.5])
        with pytest.raises(ValueError, match="non-negative"):
            FusionConfig(k=2, alphas=[-0.1])


class TestCheckpoint:
    def test_round_trip_exact(self, rng, tmp_path):
        g = random_graph(18, 0.3, rng, weighted=True)
        merged = merge_views(MultiViewGraph(18, [g]), FusionConfig(k=4, alphas=[0.5]))
        path = tmp_path / "merged.bin"
        save_modified_laplacian(merged, path)
        loaded = load_modified_laplacian(path)
        assert np.array_equal(loaded.L_mod, merged.L_mod)
        assert np.array_equal(loaded.U_merged, merged.U_merged)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTLMODX" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_modified_laplacian(path)

    def test_truncated(self, rng, tmp_path):
        g = random_graph(10, 0.4, rng)
        merged = merge_views(MultiViewGraph(10, [g]), FusionConfig(k=2, alphas=[0.0]))
        path = tmp_path / "merged.bin"
        save_modified_laplacian(merged, path)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError, match="truncated"):
            load_modified_laplacian(path)


class TestTypes:
    def test_spectral_embedding_validates(self, rng):
        U = random_orthonormal(8, 3, rng)
        with pytest.raises(ValueError, match="orthonormal"):
            SpectralEmbedding(U=U * 2.0, eigenvalues=np.zeros(3))
        with pytest.raises(ValueError, match="ascending"):
            SpectralEmbedding(U=U, eigenvalues=np.array([1.0, 0.5, 0.2]))
        with pytest.raises(ValueError, match=r"\[0, 2\]"):
            SpectralEmbedding(U=U, eigenvalues=np.array([0.0, 1.0, 5.0]))

    def test_modified_laplacian_validates(self, rng):
        U = random_orthonormal(6, 2, rng)
        asym = np.eye(6)
        asym[0, 1] = 1e-3
        with pytest.raises(ValueError, match="symmetric"):
            ModifiedLaplacian(L_mod=asym, U_merged=U)
        with pytest.raises(ValueError, match="orthonormal"):
            ModifiedLaplacian(L_mod=np.eye(6), U_merged=U * 3.0)
        bad = np.full((6, 6), np.nan)
        with pytest.raises(ValueError, match="finite"):
            ModifiedLaplacian(L_mod=bad, U_merged=U)
