"""Outer ADMM for ``min lam ||S||_1 + ||L||_*  s.t.  L + H S = M0``.

Each outer iteration performs

    L <- svt(M0 - H S - U, 1 / rho_outer)
    S <- LASSO(H, M0 - U - L, lam / rho_outer)     (inner ADMM, rho_inner)
    U <- U + L + H S - M0

and stops once the joint change of ``(L, S)`` relative to ``||(L, S)||_F + 1``
drops below ``tol_outer``.  The preconditioned variants replace ``H`` by the
polar factor ``U_H V_H^T`` and ``M0`` by ``U_H diag(1/s) U_H^T M0`` before
running the same loop, then rebuild ``L`` from the original constraint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateFilterError, InvalidParameterError, ShapeError
from .filters import (
    BlockCirculantFilter,
    BlockFilter,
    DenseFilter,
    FilterSpec,
    SeparableFilter,
    as_filter,
    is_circulant,
)
from .lasso import LassoConfig, admm_lasso
from .numerics import (
    bilinear_framewise,
    blockdiag_matmul,
    check_finite,
    mat3,
    rel_err,
    singular_value_threshold,
    ten3,
)


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the outer/inner ADMM loops.

    ``lam=None`` resolves to ``1 / sqrt(min(m, n))`` of the (unfolded) data.
    """

    lam: Optional[float] = None
    rho_outer: float = 1.0
    rho_inner: float = 1.0
    max_outer: int = 500
    max_inner: int = 30
    tol_outer: float = 1e-7
    tol_inner: float = 1e-5
    warm_start_inner: bool = False
    rank_rtol: float = 1e-12
    backend: str = "auto"

    def __post_init__(self):
        for name in ("rho_outer", "rho_inner", "tol_outer", "tol_inner", "rank_rtol"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.lam is not None and not self.lam > 0:
            raise InvalidParameterError("lam must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidParameterError("iteration caps must be at least 1")

    def resolve_lam(self, m, n):
        return self.lam if self.lam is not None else 1.0 / math.sqrt(min(m, n))


@dataclass
class ConvergenceTrace:
    change: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    relerr_s: list = field(default_factory=list)
    relerr_l: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)

    def __len__(self):
        return len(self.change)

    def rows(self):
        """One dict per outer iteration (RelErr columns are ``None`` without ground truth)."""
        n = len(self)
        rs = self.relerr_s or [None] * n
        rl = self.relerr_l or [None] * n
        return [
            dict(iter=k + 1, change=self.change[k], residual=self.residual[k],
                 relerr_s=rs[k], relerr_l=rl[k], inner_iters=self.inner_iters[k])
            for k in range(n)
        ]


@dataclass
class SeparationResult:
    S_hat: np.ndarray
    L_hat: np.ndarray
    trace: ConvergenceTrace
    terminated_by: str
    # low-rank part of the preconditioned problem, C @ L_hat in exact arithmetic
    Y: Optional[np.ndarray] = None

    @property
    def iterations(self):
        return len(self.trace)


def _outer_admm(M, apply_H, op, s_shape, unfold, fold, lam, cfg, monitor=None):
    L = np.zeros_like(M)
    U = np.zeros_like(M)
    S = np.zeros(s_shape)
    HS = apply_H(S)
    lcfg = LassoConfig(lam / cfg.rho_outer, cfg.rho_inner, cfg.max_inner, cfg.tol_inner)
    trace = ConvergenceTrace()
    state = None
    reason = "max_iters"
    for _ in range(cfg.max_outer):
        L_new = fold(singular_value_threshold(unfold(M - HS - U), 1.0 / cfg.rho_outer))
        S_new, st, inner = admm_lasso(op, M - U - L_new, lcfg, state if cfg.warm_start_inner else None)
        state = st
        HS = apply_H(S_new)
        U = U + L_new + HS - M
        num = math.sqrt(np.linalg.norm(L_new - L) ** 2 + np.linalg.norm(S_new - S) ** 2)
        den = math.sqrt(np.linalg.norm(L) ** 2 + np.linalg.norm(S) ** 2) + 1.0
        L, S = L_new, S_new
        trace.change.append(num / den)
        trace.residual.append(float(np.linalg.norm(L + HS - M)))
        trace.inner_iters.append(inner)
        if monitor is not None:
            rs, rl = monitor(L, S)
            trace.relerr_s.append(rs)
            trace.relerr_l.append(rl)
        if num / den < cfg.tol_outer:
            reason = "tolerance"
            break
    return L, S, trace, reason


def _truth_monitor(truth, L_of):
    if truth is None:
        return None
    L0, S0 = (np.asarray(t, dtype=float) for t in truth)
    return lambda L, S: (rel_err(S0, S), rel_err(L0, L_of(L, S)))


def _matrix_filter(H, M0):
    H = as_filter(H)
    if H.is_tensor:
        raise ShapeError("matrix separation needs a matrix filter; use gts for framewise filters")
    M0 = np.asarray(M0, dtype=float)
    if M0.ndim != 2:
        raise ShapeError("M0 must be a matrix")
    if H.shape[0] != M0.shape[0]:
        raise ShapeError(f"filter has {H.shape[0]} rows but M0 has {M0.shape[0]}")
    check_finite(M0, name="M0")
    return H, M0


def gms(M0, H, cfg: SolverConfig = None, truth=None) -> SeparationResult:
    """Generalized matrix separation without preconditioning.

    ``truth=(L0, S0)`` adds per-iteration relative errors to the trace.
    """
    cfg = cfg or SolverConfig()
    H, M0 = _matrix_filter(H, M0)
    m, n = M0.shape
    op = H.operator(cfg.rho_inner, cfg.backend)
    ident = lambda X: X
    L, S, trace, reason = _outer_admm(
        M0, H.apply, op, (H.shape[1], n), ident, ident, cfg.resolve_lam(m, n), cfg,
        _truth_monitor(truth, lambda L, S: L),
    )
    return SeparationResult(S, L, trace, reason)


@dataclass
class PreconditionedFilter:
    H_tilde: DenseFilter
    C: np.ndarray
    retained_rank: int
    original: FilterSpec
    singular_values: np.ndarray


def _polar_parts(H, rank_rtol):
    if not rank_rtol > 0:
        raise InvalidParameterError("rank_rtol must be positive")
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise DegenerateFilterError("filter has no nonzero singular values")
    r = int(np.count_nonzero(s > rank_rtol * s[0]))
    U, s, Vt = U[:, :r], s[:r], Vt[:r]
    return U @ Vt, (U / s) @ U.T, r, s


def precondition_filter(H, rank_rtol=1e-12) -> PreconditionedFilter:
    """Replace ``H`` by ``U_r V_r^T`` and build ``C = U_r diag(1/s_r) U_r^T``.

    Singular values below ``rank_rtol * s_max`` are discarded.
    """
    H = as_filter(H)
    Ht, C, r, s = _polar_parts(H.densify(), rank_rtol)
    return PreconditionedFilter(DenseFilter(Ht), C, r, H, s)


def pgms(M0, H, cfg: SolverConfig = None, truth=None) -> SeparationResult:
    """Preconditioned generalized matrix separation."""
    cfg = cfg or SolverConfig()
    H, M0 = _matrix_filter(H, M0)
    pf = precondition_filter(H, cfg.rank_rtol)
    backend = "dense-svd" if cfg.backend in ("auto", "circulant") else cfg.backend
    op = pf.H_tilde.operator(cfg.rho_inner, backend)
    m, n = M0.shape
    ident = lambda X: X
    Y, S, trace, reason = _outer_admm(
        pf.C @ M0, pf.H_tilde.apply, op, (H.shape[1], n), ident, ident,
        cfg.resolve_lam(m, n), cfg,
        _truth_monitor(truth, lambda L, S: M0 - H.apply(S)),
    )
    return SeparationResult(S, recover_low_rank(M0, H, S), trace, reason, Y=Y)


def recover_low_rank(M0, H, S_hat):
    H = as_filter(H)
    M0 = np.asarray(M0, dtype=float)
    S_hat = np.asarray(S_hat, dtype=float)
    HS = H.apply(S_hat)
    if HS.shape != M0.shape:
        raise ShapeError(f"H @ S_hat has shape {HS.shape}, M0 has {M0.shape}")
    return M0 - HS


def _tensor_filter(H, M0):
    H = as_filter(H)
    if not H.is_tensor:
        raise ShapeError("tensor separation needs a framewise filter")
    M0 = np.asarray(M0, dtype=float)
    if M0.ndim != 3:
        raise ShapeError("M0 must be an order-3 tensor")
    if H.frame_out != M0.shape[:2]:
        raise ShapeError(f"filter produces frames {H.frame_out}, M0 has {M0.shape[:2]}")
    check_finite(M0, name="M0")
    return H, M0


def _gts_core(M0, H, cfg, monitor):
    m1, m2, K = M0.shape
    op = H.operator(cfg.rho_inner, cfg.backend)
    p1, p2 = H.frame_in
    return _outer_admm(
        M0, H.apply, op, (p1, p2, K), mat3, lambda X: ten3(X, m1, m2),
        cfg.resolve_lam(m1 * m2, K), cfg, monitor,
    )


def gts(M0, H, cfg: SolverConfig = None, truth=None) -> SeparationResult:
    """Generalized tensor separation with a framewise filter.

    ``H`` is a :class:`SeparableFilter` (or a ``(G1, G2)`` tuple), a
    :class:`BlockFilter` or a :class:`BlockCirculantFilter`; the inner LASSO
    backend follows the filter type unless ``cfg.backend`` overrides it.
    """
    cfg = cfg or SolverConfig()
    H, M0 = _tensor_filter(H, M0)
    L, S, trace, reason = _gts_core(M0, H, cfg, _truth_monitor(truth, lambda L, S: L))
    return SeparationResult(S, L, trace, reason)


@dataclass
class PreconditionedSeparable:
    H_tilde: SeparableFilter
    C1: np.ndarray
    C2: np.ndarray
    ranks: tuple
    original: SeparableFilter

    def apply_C(self, T):
        if isinstance(self.H_tilde, BlockFilter):
            return blockdiag_matmul(self.C2, blockdiag_matmul(self.C1, T, 0), 1)
        return bilinear_framewise(T, self.C1, self.C2.T)


def precondition_separable(H, rank_rtol=1e-12) -> PreconditionedSeparable:
    """Per-axis preconditioning; block filters are treated kernel by kernel."""
    H = as_filter(H)
    if isinstance(H, BlockFilter):
        E1t, C1, r1, _ = _polar_parts(H.E1, rank_rtol)
        E2t, C2, r2, _ = _polar_parts(H.E2, rank_rtol)
        keep_fft = isinstance(H, BlockCirculantFilter) and is_circulant(E1t) and is_circulant(E2t)
        cls = BlockCirculantFilter if keep_fft else BlockFilter
        Ht = cls(E1t, E2t, H.k1, H.k2)
        return PreconditionedSeparable(Ht, C1, C2, (r1 * H.k1, r2 * H.k2), H)
    G1t, C1, r1, _ = _polar_parts(H.G1, rank_rtol)
    G2t, C2, r2, _ = _polar_parts(H.G2, rank_rtol)
    return PreconditionedSeparable(SeparableFilter(G1t, G2t), C1, C2, (r1, r2), H)


def pgts(M0, H, cfg: SolverConfig = None, truth=None) -> SeparationResult:
    """Preconditioned generalized tensor separation."""
    cfg = cfg or SolverConfig()
    H, M0 = _tensor_filter(H, M0)
    pf = precondition_separable(H, cfg.rank_rtol)
    if cfg.backend == "block-circulant" and not isinstance(pf.H_tilde, BlockCirculantFilter):
        cfg = replace(cfg, backend="auto")
    Y, S, trace, reason = _gts_core(
        pf.apply_C(M0), pf.H_tilde, cfg,
        _truth_monitor(truth, lambda L, S: M0 - H.apply(S)),
    )
    return SeparationResult(S, recover_low_rank(M0, H, S), trace, reason, Y=Y)
