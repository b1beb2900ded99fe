import numpy as np
import pytest

from gmsep import (
    BlockCirculantFilter,
    BlockFilter,
    CirculantFilter,
    DegenerateFilterError,
    DenseFilter,
    InvalidParameterError,
    SeparableFilter,
    ShapeError,
    SolverConfig,
    gms,
    gts,
    pgms,
    pgts,
    precondition_filter,
    recover_low_rank,
    rel_err,
)
from gmsep.filters import as_filter, is_circulant
from gmsep.lasso import LassoConfig, lasso_dense_svd
from gmsep.numerics import circulant_matrix, mat3, singular_value_threshold, soft_threshold, ten3
from gmsep.separation import precondition_separable

FIXED = dict(tol_outer=1e-300, tol_inner=1e-300)


def low_rank(rng, m, n, r):
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


def spikes(rng, shape, frac):
    S = np.zeros(int(np.prod(shape)))
    idx = rng.choice(S.size, int(frac * S.size), replace=False)
    S[idx] = rng.standard_normal(idx.size)
    return S.reshape(shape, order="F")


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(rho_outer=0), dict(rho_inner=-1), dict(max_outer=0),
                                    dict(tol_inner=0), dict(lam=0.0), dict(rank_rtol=0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidParameterError):
            SolverConfig(**kw)

    def test_default_lambda(self):
        assert SolverConfig().resolve_lam(270, 300) == pytest.approx(1 / np.sqrt(270))
        assert SolverConfig(lam=0.3).resolve_lam(5, 5) == 0.3


class TestFilters:
    def test_dense_apply_transpose(self, rng):
        H = rng.standard_normal((5, 4))
        f = DenseFilter(H)
        X = rng.standard_normal((4, 3))
        assert np.allclose(f.apply(X), H @ X)
        assert np.allclose(f.apply_transpose(f.apply(X)), H.T @ H @ X)

    def test_circulant_dense_agreement(self, rng):
        c = rng.standard_normal(6)
        f = CirculantFilter(c)
        X = rng.standard_normal((6, 2))
        assert np.allclose(f.apply(X), circulant_matrix(c) @ X)
        assert np.allclose(f.apply_transpose(X), circulant_matrix(c).T @ X)

    def test_separable_and_block_densify(self, rng):
        G1, G2 = rng.standard_normal((3, 2)), rng.standard_normal((4, 3))
        T = rng.standard_normal((2, 3, 2))
        f = SeparableFilter(G1, G2)
        assert np.allclose(mat3(f.apply(T)), f.densify() @ mat3(T))
        b = BlockFilter.for_frames(rng.standard_normal((2, 2)), rng.standard_normal((3, 3)), (4, 6))
        T = rng.standard_normal((4, 6, 2))
        assert np.allclose(mat3(b.apply(T)), b.densify() @ mat3(T))
        assert np.allclose(mat3(b.apply_transpose(T)), b.densify().T @ mat3(T))
        with pytest.raises(ShapeError):
            BlockFilter.for_frames(np.eye(2), np.eye(4), (4, 6))

    def test_backend_selection(self, rng):
        f = DenseFilter(rng.standard_normal((3, 3)))
        assert f.operator(1.0).variant == "dense-svd"
        assert f.operator(1.0, "cholesky").variant == "cholesky"
        with pytest.raises(InvalidParameterError):
            f.operator(1.0, "circulant")
        assert CirculantFilter(np.arange(4.0)).operator(1.0).variant == "circulant"

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            DenseFilter(np.array([[np.inf]]))

    def test_as_filter(self, rng):
        assert isinstance(as_filter((np.eye(2), np.eye(3))), SeparableFilter)
        assert isinstance(as_filter(np.eye(2)), DenseFilter)
        assert is_circulant(circulant_matrix(rng.standard_normal(5)))
        assert not is_circulant(rng.standard_normal((5, 5)))


class TestPreconditioner:
    def test_scaled_identity(self):
        pf = precondition_filter(np.eye(4) * 2.5)
        assert np.allclose(pf.C, np.eye(4) / 2.5, atol=1e-15)
        assert np.allclose(pf.H_tilde.H, np.eye(4), atol=1e-15)

    def test_diagonal_rank_deficient(self):
        pf = precondition_filter(np.diag([2.0, 1.0, 0.0]))
        assert pf.retained_rank == 2
        assert np.allclose(pf.H_tilde.H, np.diag([1.0, 1.0, 0.0]), atol=1e-15)

    def test_random_rectangular(self, rng):
        H = rng.standard_normal((40, 35))
        pf = precondition_filter(H)
        Ht = pf.H_tilde.H
        s = np.linalg.svd(Ht, compute_uv=False)
        assert np.all(np.abs(s - 1) <= 1e-10)
        P = np.linalg.pinv(H) @ H
        assert np.linalg.norm(Ht.T @ Ht - P) <= 1e-8
        assert np.allclose(pf.C @ H, Ht, atol=1e-10)

    def test_zero_filter(self):
        with pytest.raises(DegenerateFilterError):
            precondition_filter(np.zeros((3, 3)))

    def test_circulant_filter_densified(self):
        c = np.zeros(6)
        c[0], c[-1] = -1, 1
        pf = precondition_filter(CirculantFilter(c))
        assert pf.retained_rank == 5

    def test_per_axis(self, rng):
        H = SeparableFilter(rng.standard_normal((5, 4)), rng.standard_normal((3, 3)))
        ps = precondition_separable(H)
        for G in (ps.H_tilde.G1, ps.H_tilde.G2):
            assert np.allclose(np.linalg.svd(G, compute_uv=False), 1, atol=1e-10)

    def test_block_structure_kept(self, rng):
        E1, E2 = circulant_matrix(rng.standard_normal(2)), circulant_matrix(rng.standard_normal(4))
        ps = precondition_separable(BlockCirculantFilter(E1, E2, 2, 2))
        assert isinstance(ps.H_tilde, BlockCirculantFilter)
        ps = precondition_separable(BlockFilter(rng.standard_normal((2, 2)), np.eye(3), 2, 1))
        assert type(ps.H_tilde) is BlockFilter


class TestGMS:
    def test_zero_input(self, rng):
        H = rng.standard_normal((6, 5))
        for solver in (gms, pgms):
            res = solver(np.zeros((6, 4)), H)
            assert not res.S_hat.any() and not res.L_hat.any()
            assert res.terminated_by == "tolerance"

    def test_classical_rpca(self, rng):
        L0 = low_rank(rng, 50, 50, 1)
        S0 = spikes(rng, (50, 50), 0.02)
        res = gms(L0 + S0, np.eye(50), SolverConfig(max_outer=1000, max_inner=100, tol_outer=1e-10,
                                                    tol_inner=1e-12))
        assert rel_err(S0, res.S_hat) <= 1e-4

    def test_rpca_oracle(self, rng):
        """H = I, one warm-started inner step: a hand-written elementwise iteration."""
        M = low_rank(rng, 20, 20, 2) + spikes(rng, (20, 20), 0.05)
        ro, ri, lam, T = 1.3, 0.7, 1 / np.sqrt(20), 25
        cfg = SolverConfig(rho_outer=ro, rho_inner=ri, max_outer=T, max_inner=1,
                           warm_start_inner=True, **FIXED)
        res = gms(M, np.eye(20), cfg, truth=None)
        L = U = S = z = u = np.zeros_like(M)
        for _ in range(T):
            L = singular_value_threshold(M - S - U, 1 / ro)
            B = M - U - L
            S = (B + ri * (z - u)) / (1 + ri)
            z = soft_threshold(S + u, lam / ro / ri)
            u = u + S - z
            U = U + L + S - M
        assert np.abs(res.S_hat - S).max() <= 1e-10
        assert np.abs(res.L_hat - L).max() <= 1e-10

    def test_orthogonal_filter_same_path(self, rng):
        Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
        L0, S0 = low_rank(rng, 12, 10, 1), spikes(rng, (12, 10), 0.05)
        M0 = L0 + Q @ S0
        cfg = SolverConfig(max_outer=30, **FIXED)
        a, b = gms(M0, Q, cfg, truth=(L0, S0)), pgms(M0, Q, cfg, truth=(L0, S0))
        assert np.allclose(a.trace.relerr_s, b.trace.relerr_s, rtol=0, atol=1e-10)
        assert np.abs(a.S_hat - b.S_hat).max() <= 1e-10

    def test_pgms_constraint_identity_and_diagnostic(self, rng):
        H = rng.standard_normal((30, 28))
        M0 = low_rank(rng, 30, 25, 1) + H @ spikes(rng, (28, 25), 0.05)
        res = pgms(M0, H, SolverConfig(max_outer=20))
        assert np.linalg.norm(res.L_hat + H @ res.S_hat - M0) <= 1e-12 * np.linalg.norm(M0)
        assert res.Y is not None and res.Y.shape == M0.shape

    def test_pgms_recovers(self, rng):
        H = rng.standard_normal((40, 40))
        L0, S0 = low_rank(rng, 40, 40, 2), spikes(rng, (40, 40), 0.05)
        res = pgms(L0 + H @ S0, H, SolverConfig(max_outer=300, max_inner=50, tol_outer=1e-12,
                                                 tol_inner=1e-10), truth=(L0, S0))
        assert rel_err(S0, res.S_hat) <= 1e-6
        assert len(res.trace.relerr_s) == res.iterations == len(res.trace.residual)

    def test_circulant_backend_agrees_with_dense(self, rng):
        c = np.zeros(16)
        c[0], c[-1] = -1, 1
        M0 = low_rank(rng, 16, 12, 1) + circulant_matrix(c) @ spikes(rng, (16, 12), 0.05)
        cfg = SolverConfig(max_outer=20, **FIXED)
        a = gms(M0, CirculantFilter(c), cfg)
        b = gms(M0, circulant_matrix(c), cfg)
        assert np.linalg.norm(a.S_hat - b.S_hat) <= 1e-8 * np.linalg.norm(b.S_hat)

    def test_shape_errors(self, rng):
        with pytest.raises(ShapeError):
            gms(np.zeros((4, 3)), np.eye(5))
        with pytest.raises(ShapeError):
            gms(np.zeros((4, 3, 2)), np.eye(4))
        with pytest.raises(ValueError):
            gms(np.full((2, 2), np.nan), np.eye(2))

    def test_deterministic(self, rng):
        H = rng.standard_normal((15, 15))
        M0 = rng.standard_normal((15, 10))
        a, b = pgms(M0, H, SolverConfig(max_outer=15)), pgms(M0, H, SolverConfig(max_outer=15))
        assert a.trace.change == b.trace.change and np.array_equal(a.S_hat, b.S_hat)

    def test_update_operators_homogeneous(self, rng):
        Y, alpha = rng.standard_normal((6, 5)), 3.7
        assert np.allclose(singular_value_threshold(alpha * Y, alpha * 0.8), alpha * singular_value_threshold(Y, 0.8))
        assert np.allclose(soft_threshold(alpha * Y, alpha * 0.4), alpha * soft_threshold(Y, 0.4))
        A, B = rng.standard_normal((6, 4)), rng.standard_normal((6, 2))
        x1, _, _ = lasso_dense_svd(A, alpha * B, LassoConfig(alpha * 0.2, 1.0, 15, 1e-300))
        x2, _, _ = lasso_dense_svd(A, B, LassoConfig(0.2, 1.0, 15, 1e-300))
        assert np.allclose(x1, alpha * x2, rtol=1e-12, atol=1e-12)

    def test_strict_cap_reported(self, rng):
        res = gms(rng.standard_normal((8, 8)), np.eye(8), SolverConfig(max_outer=2))
        assert res.terminated_by == "max_iters" and res.iterations == 2


class TestRecoverLowRank:
    def test_identities(self, rng):
        H = rng.standard_normal((7, 5))
        M0, S = rng.standard_normal((7, 4)), rng.standard_normal((5, 4))
        assert np.array_equal(recover_low_rank(M0, H, np.zeros((5, 4))), M0)
        L0 = rng.standard_normal((7, 4))
        assert np.allclose(recover_low_rank(L0 + H @ S, H, S), L0, atol=1e-13)
        L = recover_low_rank(M0, H, S)
        assert np.linalg.norm(L + H @ S - M0) <= 1e-14 * np.linalg.norm(M0)
        with pytest.raises(ShapeError):
            recover_low_rank(M0, H, np.zeros((5, 3)))


class TestTensor:
    def test_zero(self):
        res = gts(np.zeros((4, 4, 3)), (np.eye(4), np.eye(4)))
        assert not res.S_hat.any()

    def test_identity_filter_rpca(self, rng):
        L0 = ten3(low_rank(rng, 64, 5, 1), 8, 8)
        S0 = spikes(rng, (8, 8, 5), 0.03)
        cfg = SolverConfig(max_outer=1000, max_inner=100, tol_outer=1e-10, tol_inner=1e-12)
        res = gts(L0 + S0, (np.eye(8), np.eye(8)), cfg)
        assert rel_err(S0, res.S_hat) <= 1e-4
        ref = gms(mat3(L0 + S0), np.eye(64), cfg)
        assert np.allclose(mat3(res.S_hat), ref.S_hat, atol=1e-10)

    def test_gts_matches_densified(self, rng):
        G1, G2 = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
        S0 = spikes(rng, (6, 6, 4), 0.05)
        M0 = ten3(low_rank(rng, 36, 4, 1), 6, 6) + SeparableFilter(G1, G2).apply(S0)
        cfg = SolverConfig(max_outer=25, **FIXED)
        a = gts(M0, (G1, G2), cfg)
        b = gms(mat3(M0), np.kron(G2, G1), cfg)
        assert np.linalg.norm(mat3(a.S_hat) - b.S_hat) <= 1e-8 * np.linalg.norm(b.S_hat)

    def test_pgts_matches_densified(self, rng):
        G1, G2 = rng.standard_normal((5, 5)), rng.standard_normal((6, 6))
        S0 = spikes(rng, (5, 6, 4), 0.05)
        M0 = ten3(low_rank(rng, 30, 4, 1), 5, 6) + SeparableFilter(G1, G2).apply(S0)
        cfg = SolverConfig(max_outer=25, **FIXED)
        a = pgts(M0, (G1, G2), cfg)
        b = pgms(mat3(M0), np.kron(G2, G1), cfg)
        assert np.linalg.norm(mat3(a.S_hat) - b.S_hat) <= 1e-8 * np.linalg.norm(b.S_hat)
        assert np.linalg.norm(a.L_hat + SeparableFilter(G1, G2).apply(a.S_hat) - M0) <= 1e-12 * np.linalg.norm(M0)

    def test_orthogonal_factors_match_gts(self, rng):
        Q1, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        Q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        M0 = rng.standard_normal((5, 4, 3))
        cfg = SolverConfig(max_outer=10, **FIXED)
        assert np.allclose(pgts(M0, (Q1, Q2), cfg).S_hat, gts(M0, (Q1, Q2), cfg).S_hat, atol=1e-10)

    @pytest.mark.parametrize("backend", ["block", "separable", "block-circulant"])
    def test_block_backends_agree(self, rng, backend):
        E1, E2 = circulant_matrix(rng.uniform(0.5, 1, 2)), circulant_matrix(rng.uniform(0.5, 1, 4))
        H = BlockCirculantFilter(E1, E2, 2, 2)
        M0 = rng.standard_normal((4, 8, 3))
        cfg = SolverConfig(max_outer=10, **FIXED)
        ref = gts(M0, SeparableFilter(*H.factors()), cfg)
        res = gts(M0, H, SolverConfig(max_outer=10, backend=backend, **FIXED))
        assert np.linalg.norm(res.S_hat - ref.S_hat) <= 1e-8 * np.linalg.norm(ref.S_hat)

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            gts(np.zeros((4, 4)), (np.eye(4), np.eye(4)))
        with pytest.raises(ShapeError):
            gts(np.zeros((4, 5, 2)), (np.eye(4), np.eye(4)))
        with pytest.raises(ShapeError):
            gts(np.zeros((4, 4, 2)), np.eye(4))
