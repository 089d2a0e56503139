"""Ridge-whitened empirical CCA: statistics, nuclear-norm objective and its gradient."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    IllConditioned,
    InsufficientSamples,
    InvalidShape,
    NonFiniteInput,
    NonUniqueSubgradient,
)

TIE_GAP = 1e-8


def inv_sqrt_psd(M: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Symmetric inverse square root of a PSD matrix via ``eigh``.

    Eigenvalues are floored at ``floor`` (when positive) before inversion.
    """
    M = 0.5 * (M + M.T)
    lam, vec = np.linalg.eigh(M)
    if floor > 0:
        lam = np.maximum(lam, floor)
    if lam.min() <= 0:
        raise IllConditioned(f"matrix is not positive definite (lambda_min={lam.min():.3e})")
    return (vec / np.sqrt(lam)) @ vec.T


@dataclass
class CcaStats:
    n: int
    mean_z: np.ndarray
    mean_zp: np.ndarray
    Sigma_zz: np.ndarray
    Sigma_zpzp: np.ndarray
    Sigma_zzp: np.ndarray
    epsilon: float
    W_z: np.ndarray
    W_zp: np.ndarray
    K: np.ndarray
    U: np.ndarray
    singulars: np.ndarray
    Vt: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "epsilon": self.epsilon,
                "singulars": self.singulars.tolist(),
                "cond_Sigma_zz": float(np.linalg.cond(self.Sigma_zz)),
                "cond_Sigma_zpzp": float(np.linalg.cond(self.Sigma_zpzp)),
            }
        )


def _check_pair(Z, Zp, epsilon):
    Z = np.asarray(Z, dtype=float)
    Zp = np.asarray(Zp, dtype=float)
    if Z.ndim != 2 or Zp.ndim != 2 or Z.shape[0] != Zp.shape[0]:
        raise InvalidShape(f"views must be (n, d) with equal n, got {Z.shape} and {Zp.shape}")
    if Z.shape[0] < 2:
        raise InsufficientSamples(f"need n >= 2 samples, got {Z.shape[0]}")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(Zp))):
        raise NonFiniteInput("encoder outputs contain NaN or inf")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    return Z, Zp


def empirical_cross_stats(Z, Zp, epsilon: float) -> CcaStats:
    Z, Zp = _check_pair(Z, Zp, epsilon)
    n = Z.shape[0]
    mz, mzp = Z.mean(axis=0), Zp.mean(axis=0)
    Zc, Zpc = Z - mz, Zp - mzp
    s11 = Zc.T @ Zc / (n - 1)
    s22 = Zpc.T @ Zpc / (n - 1)
    s12 = Zc.T @ Zpc / (n - 1)
    s11 = 0.5 * (s11 + s11.T)
    s22 = 0.5 * (s22 + s22.T)
    W1 = inv_sqrt_psd(s11 + epsilon * np.eye(s11.shape[0]), floor=epsilon)
    W2 = inv_sqrt_psd(s22 + epsilon * np.eye(s22.shape[0]), floor=epsilon)
    K = W1 @ s12 @ W2
    U, sv, Vt = np.linalg.svd(K, full_matrices=False)
    return CcaStats(n, mz, mzp, s11, s22, s12, float(epsilon), W1, W2, K, U, sv, Vt)


def cca_objective(stats: CcaStats) -> float:
    """Nuclear norm of the whitened cross-covariance (sum of canonical correlations)."""
    return float(np.sum(stats.singulars))


def _has_ties(sv: np.ndarray) -> bool:
    return sv.size > 1 and bool(np.any(np.abs(np.diff(sv)) < TIE_GAP))


def cca_gradient_from_stats(stats: CcaStats, Z, Zp):
    """Gradient of the objective w.r.t. raw outputs, reusing precomputed stats."""
    if _has_ties(stats.singulars):
        warnings.warn("tied singular values; returning the U V^T subgradient", NonUniqueSubgradient)
    U, S, V = stats.U, stats.singulars, stats.Vt.T
    W1, W2 = stats.W_z, stats.W_zp
    d12 = W1 @ U @ V.T @ W2
    d11 = -0.5 * (W1 @ (U * S) @ U.T @ W1)
    d22 = -0.5 * (W2 @ (V * S) @ V.T @ W2)
    Zc = Z - stats.mean_z
    Zpc = Zp - stats.mean_zp
    scale = 1.0 / (stats.n - 1)
    G = scale * (2.0 * Zc @ d11 + Zpc @ d12.T)
    Gp = scale * (2.0 * Zpc @ d22 + Zc @ d12)
    return G, Gp


def cca_gradient(Z, Zp, epsilon: float):
    """``(dJ/dZ, dJ/dZ')`` for the ridge-whitened nuclear-norm objective.

    Warns :class:`NonUniqueSubgradient` when singular values are tied to
    within ``1e-8``; the returned direction is then one valid subgradient.
    """
    Z, Zp = _check_pair(Z, Zp, epsilon)
    return cca_gradient_from_stats(empirical_cross_stats(Z, Zp, epsilon), Z, Zp)


@dataclass
class LinearCca:
    A: np.ndarray
    bias: np.ndarray
    A_prime: np.ndarray
    bias_prime: np.ndarray
    correlations: np.ndarray

    def transform(self, X, Xp):
        return np.asarray(X) @ self.A + self.bias, np.asarray(Xp) @ self.A_prime + self.bias_prime

    def __iter__(self):
        return iter((self.A, self.bias, self.A_prime, self.bias_prime))


def linear_cca_fit(X, Xp, d_Z: int, epsilon: float = 1e-8) -> LinearCca:
    """Classical linear CCA through the SVD of the whitened cross-covariance.

    Projections ``X @ A + bias`` are centered and (ridge-)white; their
    cross-correlations are the top ``d_Z`` canonical correlations.
    """
    X, Xp = _check_pair(X, Xp, epsilon)
    n = X.shape[0]
    if n <= max(X.shape[1], Xp.shape[1]):
        raise InsufficientSamples(f"need n > feature dimension, got n={n}")
    if d_Z > min(X.shape[1], Xp.shape[1]):
        raise InvalidShape(f"d_Z={d_Z} exceeds the smaller view dimension")
    st = empirical_cross_stats(X, Xp, epsilon)
    for s in (st.Sigma_zz, st.Sigma_zpzp):
        lam = np.linalg.eigvalsh(s)
        if lam[0] + epsilon <= 1e-12 * max(lam[-1], 1.0):
            raise IllConditioned("view covariance is rank deficient beyond ridge repair")
    A = st.W_z @ st.U[:, :d_Z]
    Ap = st.W_zp @ st.Vt.T[:, :d_Z]
    return LinearCca(A, -st.mean_z @ A, Ap, -st.mean_zp @ Ap, st.singulars[:d_Z].copy())
