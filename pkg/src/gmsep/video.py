"""Background removal with simultaneous deblurring for grayscale videos.

A video ``V`` (``h x w x K``, pixels in ``[0, 1]``) is mapped to ``M = 1 - V``.
Dark moving objects then become a sparse positive layer on top of a rank-one
static term.  An optional framewise blur ``H = G2 kron G1`` simulates the
observed ``M0 = H M``, and :func:`pgts` splits ``M0`` into ``H L + H S``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .filters import BlockFilter
from .separation import SeparationResult, SolverConfig, gts, pgts
from .synth import PAPER_E1, PAPER_E2, trial_rng

VIDEO_CONFIG = SolverConfig(rho_outer=1.0, rho_inner=1.0, tol_outer=1e-8, tol_inner=1e-6,
                            max_outer=100, max_inner=10)

BLURS = ("paper", "none")


def blur_filter(blur, frame_shape):
    """``paper`` uses the 2x2 / 4x4 kernels of the surveillance experiment, ``none`` the identity."""
    if blur == "paper":
        return BlockFilter.for_frames(PAPER_E1, PAPER_E2, frame_shape)
    if blur == "none":
        return BlockFilter(np.eye(1), np.eye(1), *frame_shape)
    raise InvalidParameterError(f"unknown blur {blur!r}; choose from {', '.join(BLURS)}")


@dataclass
class VideoResult:
    foreground: np.ndarray
    background: np.ndarray
    M0: np.ndarray
    result: SeparationResult


def video_pipeline(V, blur="paper", cfg: SolverConfig = VIDEO_CONFIG, precondition=True, truth=None):
    """Separate a video into deblurred moving objects and a (blurred) background.

    Returns foreground frames ``clip(1 - S_hat, 0, 1)`` and background frames
    ``clip(1 - L_hat, 0, 1)``.  The blurred input is not renormalized: the
    kernels are row-stochastic so ``[0, 1]`` data stays in ``[0, 1]``.
    """
    V = np.asarray(V, dtype=float)
    H = blur_filter(blur, V.shape[:2])
    M0 = H.apply(1.0 - V)
    res = (pgts if precondition else gts)(M0, H, cfg, truth=truth)
    return VideoResult(
        foreground=np.clip(1.0 - res.S_hat, 0.0, 1.0),
        background=np.clip(1.0 - res.L_hat, 0.0, 1.0),
        M0=M0,
        result=res,
    )


def synthetic_video(frame_shape=(16, 16), frames=6, seed=0, dot_pixels=2):
    """Static random background with a black dot moving one column per frame.

    Returns ``(V, L, S)`` where ``1 - V = L + S``: ``L = 1 - background`` is
    rank one after unfolding and ``S`` holds the background intensity on
    the dot pixels.
    """
    h, w = frame_shape
    rng = trial_rng(seed, 0x51DE0)
    bg = rng.uniform(0.2, 0.9, size=(h, w))
    V = np.repeat(bg[:, :, None], frames, axis=2)
    row = h // 2
    for k in range(frames):
        col = (1 + 2 * k) % (w - dot_pixels + 1)
        V[row, col:col + dot_pixels, k] = 0.0
    L = np.repeat(1.0 - bg[:, :, None], frames, axis=2)
    S = (1.0 - V) - L
    return V, L, S
