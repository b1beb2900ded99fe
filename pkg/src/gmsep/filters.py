"""Filter descriptions ``H`` for the separation program ``M0 = L0 + H S0``.

Matrix filters act on ``p x n`` sparse matrices; tensor filters act framewise
on ``p1 x p2 x K`` tensors as ``G1 S[:, :, k] G2^T``, which is the same as
applying ``G2 kron G1`` to the unfolded tensor.
"""
from __future__ import annotations

import numpy as np

from . import lasso
from .errors import InvalidParameterError, ShapeError
from .numerics import bilinear_framewise, blockdiag_matmul, check_finite, circulant_matrix


class FilterSpec:
    kind = ""
    is_tensor = False
    backends: tuple = ()

    def apply(self, S):
        raise NotImplementedError

    def apply_transpose(self, X):
        raise NotImplementedError

    def densify(self):
        raise NotImplementedError

    def operator(self, rho, backend="auto", frame_shape=None):
        """Prefactored LASSO operator for ``min 0.5||H S - B||^2 + lam ||S||_1``."""
        if backend == "auto":
            backend = self.backends[0]
        if backend not in self.backends:
            raise InvalidParameterError(
                f"backend {backend!r} is not available for a {self.kind} filter "
                f"(choose from {', '.join(self.backends)})"
            )
        return self._operator(backend, rho, frame_shape)


class DenseFilter(FilterSpec):
    kind = "dense"
    backends = ("dense-svd", "cholesky")

    def __init__(self, H):
        H = np.asarray(H, dtype=float)
        if H.ndim != 2:
            raise ShapeError("dense filter must be a matrix")
        check_finite(H, name="filter")
        self.H = H

    @property
    def shape(self):
        return self.H.shape

    def apply(self, S):
        return self.H @ S

    def apply_transpose(self, X):
        return self.H.T @ X

    def densify(self):
        return self.H

    def _operator(self, backend, rho, frame_shape):
        if backend == "cholesky":
            return lasso.CholeskyOperator(self.H, rho)
        return lasso.DenseSVDOperator(self.H, rho)


class CirculantFilter(FilterSpec):
    kind = "circulant"
    backends = ("circulant", "dense-svd", "cholesky")

    def __init__(self, first_col):
        c = np.asarray(first_col, dtype=float)
        if c.ndim != 1 or c.size < 1:
            raise ShapeError("circulant first column must be a nonempty vector")
        check_finite(c, name="filter")
        self.first_col = c
        self._fop = lasso.CirculantOperator(c, 1.0)

    @property
    def shape(self):
        return (self.first_col.size, self.first_col.size)

    def apply(self, S):
        return self._fop.forward(np.asarray(S, dtype=float).reshape(self.first_col.size, -1)).reshape(np.shape(S))

    def apply_transpose(self, X):
        return self._fop.adjoint(np.asarray(X, dtype=float).reshape(self.first_col.size, -1)).reshape(np.shape(X))

    def densify(self):
        return circulant_matrix(self.first_col)

    def _operator(self, backend, rho, frame_shape):
        if backend == "circulant":
            return lasso.CirculantOperator(self.first_col, rho)
        return DenseFilter(self.densify())._operator(backend, rho, frame_shape)


class SeparableFilter(FilterSpec):
    """``H = G2 kron G1`` with ``G_i`` of shape ``m_i x p_i``."""

    kind = "separable"
    is_tensor = True
    backends = ("separable",)

    def __init__(self, G1, G2):
        self.G1 = np.asarray(G1, dtype=float)
        self.G2 = np.asarray(G2, dtype=float)
        if self.G1.ndim != 2 or self.G2.ndim != 2:
            raise ShapeError("separable factors must be matrices")
        check_finite(self.G1, self.G2, name="filter")

    def factors(self):
        return self.G1, self.G2

    @property
    def frame_out(self):
        return (self.G1.shape[0], self.G2.shape[0])

    @property
    def frame_in(self):
        return (self.G1.shape[1], self.G2.shape[1])

    def apply(self, S):
        G1, G2 = self.factors()
        return bilinear_framewise(S, G1, G2.T)

    def apply_transpose(self, X):
        G1, G2 = self.factors()
        return bilinear_framewise(X, G1.T, G2)

    def densify(self):
        G1, G2 = self.factors()
        return np.kron(G2, G1)

    def _operator(self, backend, rho, frame_shape):
        return lasso.SeparableOperator(*self.factors(), rho)


class BlockFilter(SeparableFilter):
    """``G_i = I_{k_i} kron E_i`` with square kernels ``E_i``."""

    kind = "block"
    backends = ("block", "separable")

    def __init__(self, E1, E2, k1, k2):
        self.E1 = np.asarray(E1, dtype=float)
        self.E2 = np.asarray(E2, dtype=float)
        for E in (self.E1, self.E2):
            if E.ndim != 2 or E.shape[0] != E.shape[1]:
                raise ShapeError("block kernels must be square matrices")
        if int(k1) < 1 or int(k2) < 1:
            raise ShapeError("block counts must be positive")
        check_finite(self.E1, self.E2, name="filter")
        self.k1, self.k2 = int(k1), int(k2)

    @classmethod
    def for_frames(cls, E1, E2, frame_shape):
        n1, n2 = np.shape(E1)[0], np.shape(E2)[0]
        m1, m2 = frame_shape
        if m1 % n1 or m2 % n2:
            raise ShapeError(f"kernel sizes ({n1}, {n2}) do not divide frame shape ({m1}, {m2})")
        return cls(E1, E2, m1 // n1, m2 // n2)

    def factors(self):
        return np.kron(np.eye(self.k1), self.E1), np.kron(np.eye(self.k2), self.E2)

    @property
    def frame_out(self):
        return (self.k1 * self.E1.shape[0], self.k2 * self.E2.shape[0])

    frame_in = frame_out

    def _check(self, X):
        if X.ndim != 3 or X.shape[:2] != self.frame_out:
            raise ShapeError(f"tensor of shape {X.shape} does not match frames {self.frame_out}")

    def apply(self, S):
        self._check(S)
        return blockdiag_matmul(self.E2, blockdiag_matmul(self.E1, S, 0), 1)

    def apply_transpose(self, X):
        self._check(X)
        return blockdiag_matmul(self.E2.T, blockdiag_matmul(self.E1.T, X, 0), 1)

    def _operator(self, backend, rho, frame_shape):
        if backend == "separable":
            return lasso.SeparableOperator(*self.factors(), rho)
        if backend == "block-circulant":
            return lasso.BlockCirculantOperator(self.E1, self.E2, self.frame_out, rho)
        return lasso.BlockOperator(self.E1, self.E2, self.frame_out, rho)


class BlockCirculantFilter(BlockFilter):
    """Block filter with circulant kernels; the kernels are rebuilt from their first columns."""

    kind = "block_circulant"
    backends = ("block-circulant", "block", "separable")

    def __init__(self, E1, E2, k1, k2):
        E1 = np.asarray(E1, dtype=float)
        E2 = np.asarray(E2, dtype=float)
        E1 = circulant_matrix(E1 if E1.ndim == 1 else E1[:, 0])
        E2 = circulant_matrix(E2 if E2.ndim == 1 else E2[:, 0])
        super().__init__(E1, E2, k1, k2)


def as_filter(H):
    if isinstance(H, FilterSpec):
        return H
    if isinstance(H, tuple) and len(H) == 2:
        return SeparableFilter(*H)
    return DenseFilter(H)


def is_circulant(E, atol=1e-12):
    E = np.asarray(E)
    return E.ndim == 2 and E.shape[0] == E.shape[1] and np.allclose(
        E, circulant_matrix(E[:, 0]), rtol=0, atol=atol * max(1.0, np.abs(E).max())
    )
