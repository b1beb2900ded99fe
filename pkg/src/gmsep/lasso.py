"""ADMM solvers for ``min_x 0.5 * ||A x - B||_F^2 + lam * ||x||_1``.

Each backend is a prefactored operator exposing ``adjoint`` (``A^T B``) and
``solve`` (``(A^T A + rho I)^{-1} R``).  The iteration itself is shared:

    x <- solve(A^T B + rho (z - u))
    z <- soft_threshold(x + u, lam / rho)
    u <- u + x - z

and stops once ``||x_new - x||_F / (||x||_F + 1) < tol``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg as sla

from .errors import InvalidParameterError, ShapeError, GMSError
from .numerics import (
    bilinear_framewise,
    block_fft,
    blockdiag_matmul,
    check_finite,
    circulant_matrix,
    kron_diag_image,
    slicewise_divide,
    soft_threshold,
)

BACKENDS = ("dense-svd", "cholesky", "circulant", "separable", "block", "block-circulant")


@dataclass(frozen=True)
class LassoConfig:
    lam: float
    rho: float = 1.0
    max_iters: int = 30
    tol: float = 1e-5

    def __post_init__(self):
        # lam == 0 is admitted so the least-squares limit can be exercised
        if self.lam < 0:
            raise InvalidParameterError(f"lam must be nonnegative, got {self.lam}")
        if not self.rho > 0:
            raise InvalidParameterError(f"rho must be positive, got {self.rho}")
        if self.max_iters < 1:
            raise InvalidParameterError("max_iters must be at least 1")
        if not self.tol > 0:
            raise InvalidParameterError("tol must be positive")


@dataclass
class LassoState:
    z: np.ndarray
    u: np.ndarray


def _real(Z, what="inverse FFT"):
    re = Z.real
    # imaginary residue of a real problem must be at rounding level
    if np.linalg.norm(Z.imag) > 1e-8 * max(np.linalg.norm(re), 1e-300):
        raise GMSError(f"{what} produced a non-negligible imaginary part")
    return np.ascontiguousarray(re)


class PrefactoredOperator:
    """Cached factorization of ``A^T A + rho I`` for one design ``A``."""

    variant = ""

    def __init__(self, rho):
        if not rho > 0:
            raise InvalidParameterError(f"rho must be positive, got {rho}")
        self.rho = float(rho)

    def forward(self, X):
        raise NotImplementedError

    def adjoint(self, B):
        raise NotImplementedError

    def solve(self, R):
        raise NotImplementedError

    def normal(self, X):
        """``(A^T A + rho I) X``, used to check the linear solves."""
        return self.adjoint(self.forward(X)) + self.rho * X


class DenseSVDOperator(PrefactoredOperator):
    variant = "dense-svd"

    def __init__(self, A, rho):
        super().__init__(rho)
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise ShapeError("design must be a matrix")
        check_finite(A, name="design matrix")
        self.A = A
        # svd of the symmetric Gram matrix returns nonincreasing values
        self.V, self.sigma, _ = np.linalg.svd(A.T @ A)
        # V diag(1/(sigma + rho)) V^T, applied with a single product per solve
        self._inv = (self.V / (self.sigma + self.rho)) @ self.V.T

    def forward(self, X):
        return self.A @ X

    def adjoint(self, B):
        if B.shape[0] != self.A.shape[0]:
            raise ShapeError(f"right-hand side has {B.shape[0]} rows, design has {self.A.shape[0]}")
        return self.A.T @ B

    def solve(self, R):
        return self._inv @ R


class CholeskyOperator(PrefactoredOperator):
    variant = "cholesky"

    def __init__(self, A, rho):
        super().__init__(rho)
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise ShapeError("design must be a matrix")
        check_finite(A, name="design matrix")
        self.A = A
        n = A.shape[1]
        self.factor = sla.cho_factor(A.T @ A + self.rho * np.eye(n), lower=True)

    forward = DenseSVDOperator.forward
    adjoint = DenseSVDOperator.adjoint

    def solve(self, R):
        return sla.cho_solve(self.factor, R)


class CirculantOperator(PrefactoredOperator):
    """Square circulant design given by its first column."""

    variant = "circulant"

    def __init__(self, first_col, rho):
        super().__init__(rho)
        c = np.asarray(first_col, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ShapeError("circulant first column must be a nonempty vector")
        check_finite(c, name="circulant column")
        self.first_col = c
        self.d = np.fft.fft(c)
        self.coeff = np.abs(self.d) ** 2 + self.rho

    def _check(self, B):
        if B.shape[0] != self.d.size:
            raise ShapeError(f"right-hand side has {B.shape[0]} rows, circulant has size {self.d.size}")

    def forward(self, X):
        self._check(X)
        return _real(np.fft.ifft(self.d[:, None] * np.fft.fft(X, axis=0), axis=0))

    def adjoint(self, B):
        self._check(B)
        return _real(np.fft.ifft(np.conj(self.d)[:, None] * np.fft.fft(B, axis=0), axis=0))

    def solve(self, R):
        Fx = np.fft.fft(R, axis=0) / self.coeff[:, None]
        return _real(np.fft.ifft(Fx, axis=0))


class SeparableOperator(PrefactoredOperator):
    """``H = G2 kron G1`` acting framewise as ``G1 X[:, :, k] G2^T``."""

    variant = "separable"

    def __init__(self, G1, G2, rho):
        super().__init__(rho)
        self.G1 = np.asarray(G1, dtype=float)
        self.G2 = np.asarray(G2, dtype=float)
        check_finite(self.G1, self.G2, name="filter factor")
        self.V1, s1, _ = np.linalg.svd(self.G1.T @ self.G1)
        self.V2, s2, _ = np.linalg.svd(self.G2.T @ self.G2)
        self.sigma = kron_diag_image(s2, s1)

    def forward(self, X):
        return bilinear_framewise(X, self.G1, self.G2.T)

    def adjoint(self, B):
        if B.ndim != 3 or B.shape[0] != self.G1.shape[0] or B.shape[1] != self.G2.shape[0]:
            raise ShapeError(f"tensor of shape {B.shape} does not match filter factors")
        return bilinear_framewise(B, self.G1.T, self.G2)

    def solve(self, R):
        W = bilinear_framewise(R, self.V1.T, self.V2)
        W = slicewise_divide(W, self.sigma + self.rho)
        return bilinear_framewise(W, self.V1, self.V2.T)


def _block_counts(E1, E2, frame_shape):
    n1, n2 = E1.shape[0], E2.shape[0]
    m1, m2 = frame_shape
    if E1.shape != (n1, n1) or E2.shape != (n2, n2):
        raise ShapeError("block kernels must be square")
    if m1 % n1 or m2 % n2:
        raise ShapeError(f"kernel sizes ({n1}, {n2}) do not divide frame shape ({m1}, {m2})")
    return m1 // n1, m2 // n2


class BlockOperator(PrefactoredOperator):
    """``G_i = I_{k_i} kron E_i``; the Gram factors are built per kernel."""

    variant = "block"

    def __init__(self, E1, E2, frame_shape, rho):
        super().__init__(rho)
        self.E1 = np.asarray(E1, dtype=float)
        self.E2 = np.asarray(E2, dtype=float)
        check_finite(self.E1, self.E2, name="block kernel")
        self.frame_shape = tuple(frame_shape)
        self.k1, self.k2 = _block_counts(self.E1, self.E2, self.frame_shape)
        self.W1, se1, _ = np.linalg.svd(self.E1.T @ self.E1)
        self.W2, se2, _ = np.linalg.svd(self.E2.T @ self.E2)
        self.sigma = kron_diag_image(np.tile(se2, self.k2), np.tile(se1, self.k1))

    def _check(self, X):
        if X.ndim != 3 or X.shape[:2] != self.frame_shape:
            raise ShapeError(f"tensor of shape {X.shape} does not match frames {self.frame_shape}")

    def forward(self, X):
        self._check(X)
        return blockdiag_matmul(self.E2, blockdiag_matmul(self.E1, X, 0), 1)

    def adjoint(self, B):
        self._check(B)
        return blockdiag_matmul(self.E2.T, blockdiag_matmul(self.E1.T, B, 0), 1)

    def solve(self, R):
        W = blockdiag_matmul(self.W2.T, blockdiag_matmul(self.W1.T, R, 0), 1)
        W = slicewise_divide(W, self.sigma + self.rho)
        return blockdiag_matmul(self.W2, blockdiag_matmul(self.W1, W, 0), 1)


class BlockCirculantOperator(BlockOperator):
    """Block filter whose kernels are circulant; solves in the blockwise Fourier domain.

    Only the first column of each kernel is read.
    """

    variant = "block-circulant"

    def __init__(self, E1, E2, frame_shape, rho):
        PrefactoredOperator.__init__(self, rho)
        e1 = _first_col(E1)
        e2 = _first_col(E2)
        check_finite(e1, e2, name="block kernel")
        self.E1 = circulant_matrix(e1)
        self.E2 = circulant_matrix(e2)
        self.frame_shape = tuple(frame_shape)
        self.k1, self.k2 = _block_counts(self.E1, self.E2, self.frame_shape)
        self.n1, self.n2 = e1.size, e2.size
        d1 = np.abs(np.fft.fft(e1)) ** 2
        d2 = np.abs(np.fft.fft(e2)) ** 2
        self.L = np.kron(np.ones((self.k1, self.k2)), np.outer(d1, d2))

    def solve(self, R):
        Y = block_fft(block_fft(R, self.n1, 0), self.n2, 1)
        Y = slicewise_divide(Y, self.L + self.rho)
        X = block_fft(block_fft(Y, self.n1, 0, inverse=True), self.n2, 1, inverse=True)
        return _real(X)


def _first_col(E):
    E = np.asarray(E, dtype=float)
    return E if E.ndim == 1 else E[:, 0]


def admm_lasso(
    op: PrefactoredOperator,
    B,
    cfg: LassoConfig,
    init: Optional[LassoState] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
):
    """Run the LASSO ADMM iteration with a prefactored operator.

    Returns ``(x, state, iters)`` where ``state`` holds the final ``(z, u)``
    and can be passed back as ``init`` to warm-start the next call.
    ``callback(k, x)`` is invoked after every iteration.
    """
    if op.rho != cfg.rho:
        raise InvalidParameterError("operator was factored for a different rho")
    B = np.asarray(B, dtype=float)
    check_finite(B)
    AtB = op.adjoint(B)
    if init is None:
        z = np.zeros_like(AtB)
        u = np.zeros_like(AtB)
    else:
        if init.z.shape != AtB.shape or init.u.shape != AtB.shape:
            raise ShapeError(f"initial state shape {init.z.shape} does not match unknown {AtB.shape}")
        z, u = init.z.copy(), init.u.copy()
    rho = cfg.rho
    thresh = cfg.lam / rho
    x = z.copy()
    k = 0
    for k in range(1, cfg.max_iters + 1):
        x_new = op.solve(AtB + rho * (z - u))
        z = soft_threshold(x_new + u, thresh)
        u = u + x_new - z
        change = np.linalg.norm(x_new - x) / (np.linalg.norm(x) + 1.0)
        x = x_new
        if callback is not None:
            callback(k, x)
        if change < cfg.tol:
            break
    return x, LassoState(z, u), k


def _as_matrix_rhs(B):
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        return B[:, None], True
    if B.ndim != 2:
        raise ShapeError("right-hand side must be a vector or matrix")
    return B, False


def _matrix_lasso(op, B, cfg, init, callback):
    B, was_vec = _as_matrix_rhs(B)
    X, state, iters = admm_lasso(op, B, cfg, init, callback)
    return (X[:, 0] if was_vec else X), state, iters


def lasso_dense_svd(A, B, cfg, init=None, callback=None):
    return _matrix_lasso(DenseSVDOperator(A, cfg.rho), B, cfg, init, callback)


def lasso_cholesky(A, B, cfg, init=None, callback=None):
    return _matrix_lasso(CholeskyOperator(A, cfg.rho), B, cfg, init, callback)


def lasso_circulant(first_col, B, cfg, init=None, callback=None):
    return _matrix_lasso(CirculantOperator(first_col, cfg.rho), B, cfg, init, callback)


def lasso_separable(G1, G2, B, cfg, init=None, callback=None):
    return admm_lasso(SeparableOperator(G1, G2, cfg.rho), B, cfg, init, callback)


def lasso_block(E1, E2, B, cfg, init=None, callback=None):
    B = np.asarray(B, dtype=float)
    if B.ndim != 3:
        raise ShapeError("block LASSO expects an order-3 right-hand side")
    return admm_lasso(BlockOperator(E1, E2, B.shape[:2], cfg.rho), B, cfg, init, callback)


def lasso_block_circulant(E1, E2, B, cfg, init=None, callback=None):
    B = np.asarray(B, dtype=float)
    if B.ndim != 3:
        raise ShapeError("block LASSO expects an order-3 right-hand side")
    return admm_lasso(BlockCirculantOperator(E1, E2, B.shape[:2], cfg.rho), B, cfg, init, callback)


def lasso_objective(apply_A, X, B, lam):
    return 0.5 * np.linalg.norm(apply_A(X) - B) ** 2 + lam * np.abs(X).sum()
