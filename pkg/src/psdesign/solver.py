"""Inverse problem: recover per-pixel normals and albedo from an image stack.

The per-pixel model is linear, I = rho * S n = S n_tilde, so estimation is a
(weighted) linear least-squares solve followed by normalization.  Pixels are
excluded when any raw intensity falls below the shadow threshold
tau = max(3 * max(sigma), 1e-6): near-shadow measurements violate the linear
model, which says nothing about clamped intensities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    AlbedoMap,
    DimensionMismatchError,
    IntensityStack,
    LightConfig,
    NonPositiveSigmaError,
    NormalMap,
)

DEGENERATE_NORM = 1e-9
MIN_SHADOW_TAU = 1e-6


def shadow_threshold(sigmas) -> float:
    """Intensities below this are treated as (possibly) shadowed."""
    sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
    return max(3.0 * float(sigmas.max(initial=0.0)), MIN_SHADOW_TAU)


@dataclass(frozen=True)
class PixelEstimate:
    """Unnormalized solution n_tilde with its albedo/normal factorization.

    When valid, albedo equals |n_tilde| and normal equals n_tilde / |n_tilde|.
    ``residual`` is the (whitened, when weighted) least-squares residual norm.
    """

    n_tilde: np.ndarray
    albedo: float
    normal: np.ndarray
    valid: bool
    residual: float = 0.0


def _finish_estimate(n_tilde: np.ndarray, shadowed: bool, residual: float) -> PixelEstimate:
    norm = float(np.linalg.norm(n_tilde))
    if norm <= DEGENERATE_NORM or shadowed:
        return PixelEstimate(
            n_tilde=n_tilde, albedo=norm, normal=np.array([0.0, 0.0, 1.0]),
            valid=False, residual=residual,
        )
    return PixelEstimate(
        n_tilde=n_tilde, albedo=norm, normal=n_tilde / norm, valid=True, residual=residual,
    )


def solve_exact(intensities, lights: LightConfig) -> PixelEstimate:
    """Invert the square 3-light system: n_tilde = S^-1 I.

    Requires exactly three lights; rank is already guaranteed by LightConfig.
    """
    i = np.asarray(intensities, dtype=float)
    if lights.m != 3:
        raise DimensionMismatchError(f"solve_exact needs exactly 3 lights, got {lights.m}")
    if i.shape != (3,):
        raise DimensionMismatchError(f"expected 3 intensities, got shape {i.shape}")
    n_tilde = np.linalg.solve(lights.rows, i)
    shadowed = bool(np.any(i < MIN_SHADOW_TAU))
    return _finish_estimate(n_tilde, shadowed, residual=0.0)


def _whitened_system(lights: LightConfig, sigmas) -> tuple[np.ndarray, np.ndarray | None]:
    """Return (possibly whitened) design matrix and the weights used.

    Equal sigmas (including all-zero, the noiseless case) reduce to the
    unweighted solve; mixed zero/positive sigmas have no consistent weighting
    and are rejected.
    """
    sig = np.atleast_1d(np.asarray(sigmas, dtype=float))
    if sig.shape != (lights.m,):
        raise DimensionMismatchError(f"got {sig.shape[0]} sigmas for {lights.m} lights")
    if np.any(sig < 0.0):
        raise NonPositiveSigmaError("noise levels must be >= 0")
    if np.ptp(sig) == 0.0:
        return lights.rows, None
    if np.any(sig == 0.0):
        raise NonPositiveSigmaError(
            "cannot whiten with mixed zero and positive noise levels"
        )
    w = 1.0 / sig
    return lights.rows * w[:, None], w


def solve_lsq(intensities, lights: LightConfig, sigmas) -> PixelEstimate:
    """Weighted least-squares estimate of n_tilde from m >= 3 intensities.

    Minimizes sum_i ((I_i - S_i . n)/sigma_i)^2; with equal sigmas this is the
    plain normal-equations solution (S^T S)^-1 S^T I, computed here through a
    rank-revealing orthogonal factorization rather than an explicit inverse.
    """
    i = np.asarray(intensities, dtype=float)
    if i.shape != (lights.m,):
        raise DimensionMismatchError(f"expected {lights.m} intensities, got shape {i.shape}")
    design, w = _whitened_system(lights, sigmas)
    rhs = i if w is None else i * w
    n_tilde, _, _, _ = np.linalg.lstsq(design, rhs, rcond=None)
    residual = float(np.linalg.norm(rhs - design @ n_tilde))
    shadowed = bool(np.any(i < shadow_threshold(sigmas)))
    return _finish_estimate(n_tilde, shadowed, residual)


def solve_map(stack: IntensityStack, lights: LightConfig) -> tuple[NormalMap, AlbedoMap]:
    """Per-pixel least squares over the whole stack.

    The output mask is false wherever the pixel is shadowed (any intensity
    below the threshold), the solution is degenerate (|n_tilde| <= 1e-9), or
    the estimated normal faces away from the camera (z <= 0, inexpressible in
    a camera-facing normal map).
    """
    if stack.m != lights.m:
        raise DimensionMismatchError(f"stack has {stack.m} images but config has {lights.m} lights")
    h, w_px = stack.height, stack.width
    flat = stack.images.reshape(stack.m, -1)

    design, w = _whitened_system(lights, stack.sigmas)
    rhs = flat if w is None else flat * w[:, None]
    n_tilde, _, _, _ = np.linalg.lstsq(design, rhs, rcond=None)  # (3, P)

    norms = np.linalg.norm(n_tilde, axis=0)
    shadowed = np.any(flat < shadow_threshold(stack.sigmas), axis=0)
    valid = ~shadowed & (norms > DEGENERATE_NORM) & (n_tilde[2] > 0.0)

    normals = np.empty_like(n_tilde)
    safe = np.where(norms > DEGENERATE_NORM, norms, 1.0)
    np.divide(n_tilde, safe[None, :], out=normals)
    normals[:, ~valid] = np.array([0.0, 0.0, 1.0])[:, None]

    nmap = NormalMap(
        normals=normals.T.reshape(h, w_px, 3),
        mask=valid.reshape(h, w_px),
    )
    amap = AlbedoMap(values=norms.reshape(h, w_px))
    return nmap, amap
