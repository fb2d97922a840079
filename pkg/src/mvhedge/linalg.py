"""Symmetric PSD pseudoinverse and weighted one-step moment assembly.

Every backward recursion in the engine reduces to the same three
conditional moments of the price increments, weighted by the branch
probability times the child value of the opportunity process.  They are
kept unnormalized (no division by the parent opportunity value); the
normalization cancels wherever the moments are consumed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotSymmetric

SYMMETRY_RTOL = 1e-12
EIG_TRUNCATION = 1e-12


@dataclass(frozen=True)
class OneStepMoments:
    """Weighted conditional one-step moments at a non-terminal node.

    m0      = sum_k w_k            (weighted mass)
    bbar_u  = sum_k w_k d_k        (weighted drift, unnormalized)
    cbar_u  = sum_k w_k d_k d_k^T  (weighted second moment, unnormalized)

    with w_k = p_k * L_k and d_k the price increment to child k.
    """

    m0: float
    bbar_u: np.ndarray
    cbar_u: np.ndarray


def pinv_psd(m: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric matrix.

    Computed via symmetric eigendecomposition; eigenvalues with
    |lam| <= d * 1e-12 * max|lam| are truncated to zero.  The result is
    exactly symmetric, and PSD whenever the input is PSD.

    Raises NotSymmetric if the asymmetry exceeds tolerance.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric("input must be a square matrix")
    scale = np.max(np.abs(m)) if m.size else 0.0
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    if asym > SYMMETRY_RTOL * max(scale, 1.0):
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds tolerance")
    d = m.shape[0]
    if d == 0:
        return m.copy()
    sym = 0.5 * (m + m.T)
    lam, vec = np.linalg.eigh(sym)
    cutoff = d * EIG_TRUNCATION * np.max(np.abs(lam)) if lam.size else 0.0
    inv = np.where(np.abs(lam) > cutoff, 1.0 / np.where(lam == 0.0, 1.0, lam), 0.0)
    out = (vec * inv) @ vec.T
    return 0.5 * (out + out.T)


def solve_psd(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm solution of m @ x = rhs via the PSD pseudoinverse."""
    return pinv_psd(m) @ np.asarray(rhs, dtype=float)


def weighted_moments(weights: np.ndarray, increments: np.ndarray) -> OneStepMoments:
    """Assemble OneStepMoments from per-child weights p_k*L_k and
    increment vectors (one row per child)."""
    w = np.asarray(weights, dtype=float)
    d = np.asarray(increments, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    m0 = float(np.sum(w))
    bbar_u = d.T @ w
    cbar_u = (d.T * w) @ d
    return OneStepMoments(m0=m0, bbar_u=bbar_u, cbar_u=0.5 * (cbar_u + cbar_u.T))
