"""Proximal operators, reshaping helpers and structured linear-algebra kernels.

Matrices are plain 2-D ``numpy`` arrays and order-3 tensors are 3-D arrays
indexed ``T[i, j, k]`` with ``k`` the slice (frame) index.  All reshapes
follow column-major order so that ``vectorize`` stacks columns.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InvalidParameterError, ShapeError, UndefinedMetricError


def check_finite(*arrays, name="input"):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DataError(f"{name} contains NaN or Inf entries")


def soft_threshold(x, lam):
    """Elementwise shrinkage ``sign(x) * max(|x| - lam, 0)``.

    Parameters
    ----------
    x : array_like
        Real array of any shape.
    lam : float
        Nonnegative threshold.
    """
    if lam < 0:
        raise InvalidParameterError(f"threshold must be nonnegative, got {lam}")
    x = np.asarray(x, dtype=float)
    # same values as sign(x) * max(|x| - lam, 0) with fewer temporaries
    out = np.maximum(x - lam, 0.0)
    out += np.minimum(x + lam, 0.0)
    return out


def singular_value_threshold(Y, rho):
    """Shrink the singular values of ``Y`` by ``rho``.

    Returns ``U diag(max(s - rho, 0)) V^T`` which is the minimizer of
    ``rho * ||X||_* + 0.5 * ||X - Y||_F^2``.  Only the columns of ``U``/``V``
    with surviving singular values are multiplied out.
    """
    if not rho > 0:
        raise InvalidParameterError(f"rho must be positive, got {rho}")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ShapeError("singular_value_threshold expects a matrix")
    check_finite(Y)
    if Y.size == 0:
        return Y.copy()
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    s = s - rho
    keep = s > 0
    if not keep.any():
        return np.zeros_like(Y)
    return (U[:, keep] * s[keep]) @ Vt[keep]


def columnwise_reshape(x, m, n):
    x = np.asarray(x)
    if x.ndim != 1 or x.size != m * n:
        raise ShapeError(f"cannot reshape vector of length {x.size} into {m}x{n}")
    return x.reshape((m, n), order="F")


def vectorize(X):
    X = np.asarray(X)
    if X.ndim != 2:
        raise ShapeError("vectorize expects a matrix")
    return X.reshape(-1, order="F")


def mat3(T):
    """Unfold a tensor so that column ``k`` is ``vectorize(T[:, :, k])``."""
    T = np.asarray(T)
    if T.ndim != 3:
        raise ShapeError("mat3 expects an order-3 tensor")
    d1, d2, d3 = T.shape
    return T.reshape((d1 * d2, d3), order="F")


def ten3(M, d1, d2):
    """Inverse of :func:`mat3`."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != d1 * d2:
        raise ShapeError(f"matrix with shape {M.shape} cannot fold into {d1}x{d2} slices")
    return M.reshape((d1, d2, M.shape[1]), order="F")


@dataclass(frozen=True)
class CirculantSpectrum:
    size: int
    eigenvalues: np.ndarray


def circulant_spectrum(first_col):
    """Eigenvalues of the circulant with the given first column.

    Uses the unnormalized forward DFT, ``F[j, k] = exp(-2 pi i jk / n)``, so
    that ``F C F^* = n diag(F c)``.
    """
    c = np.asarray(first_col, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise ShapeError("circulant first column must be a nonempty vector")
    return CirculantSpectrum(size=c.size, eigenvalues=np.fft.fft(c))


def circulant_matrix(first_col):
    """Dense circulant ``C[i, j] = c[(i - j) mod n]``."""
    c = np.asarray(first_col, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise ShapeError("circulant first column must be a nonempty vector")
    n = c.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return c[idx]


def dft_matrix(n):
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n)


def bilinear_framewise(T, Lm, Rm):
    """Apply ``Lm @ T[:, :, k] @ Rm`` to every slice."""
    T = np.asarray(T)
    if T.ndim != 3:
        raise ShapeError("bilinear_framewise expects an order-3 tensor")
    if Lm.shape[1] != T.shape[0] or Rm.shape[0] != T.shape[1]:
        raise ShapeError(
            f"cannot apply {Lm.shape} and {Rm.shape} factors to slices of shape {T.shape[:2]}"
        )
    return np.einsum("ia,abk,bj->ijk", Lm, T, Rm, optimize=True)


def slicewise_divide(T, Y):
    T = np.asarray(T)
    Y = np.asarray(Y)
    if T.ndim != 3 or Y.shape != T.shape[:2]:
        raise ShapeError(f"divisor shape {Y.shape} does not match slices {T.shape[:2]}")
    if np.any(Y == 0):
        raise ZeroDivisionError("slicewise_divide: divisor has zero entries")
    return T / Y[:, :, None]


def kron_diag_image(dA, dB):
    """``columnwise_reshape(diag(diag(dA) kron diag(dB)), m, n)`` as an outer product."""
    dA = np.asarray(dA)
    dB = np.asarray(dB)
    return np.outer(dB, dA)


def blockdiag_matmul(E, X, axis):
    """Multiply ``X`` along ``axis`` by ``I_k kron E`` without forming it.

    ``E`` is ``n x n`` and the length of ``X`` along ``axis`` must be ``k * n``.
    """
    E = np.asarray(E)
    n = E.shape[0]
    X = np.moveaxis(np.asarray(X), axis, 0)
    m = X.shape[0]
    if E.shape[1] != n or m % n:
        raise ShapeError(f"block size {n} does not divide axis length {m}")
    Xb = X.reshape((m // n, n) + X.shape[1:])
    out = np.einsum("ab,kb...->ka...", E, Xb, optimize=True).reshape(X.shape)
    return np.moveaxis(out, 0, axis)


def block_fft(X, n, axis, inverse=False):
    """Apply ``I_k kron F_n`` (or its inverse) along ``axis``."""
    X = np.moveaxis(np.asarray(X), axis, 0)
    m = X.shape[0]
    if m % n:
        raise ShapeError(f"block size {n} does not divide axis length {m}")
    Xb = X.reshape((m // n, n) + X.shape[1:])
    Yb = np.fft.ifft(Xb, axis=1) if inverse else np.fft.fft(Xb, axis=1)
    return np.moveaxis(Yb.reshape(X.shape), 0, axis)


def nuclear_norm(X):
    return float(np.linalg.svd(X, compute_uv=False).sum())


def rel_err(truth, estimate):
    """Relative Frobenius error ``||estimate - truth||_F / ||truth||_F``."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise ShapeError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    nt = np.linalg.norm(truth)
    if nt == 0:
        raise UndefinedMetricError("relative error is undefined for an all-zero reference")
    return float(np.linalg.norm(estimate - truth) / nt)
