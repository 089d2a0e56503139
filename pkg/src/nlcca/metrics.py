"""Identifiability metrics: R^2, principal angles, orbit distance, singular-value gap."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateTarget, InsufficientSamples, InvalidShape, RankDeficientSpan

RANK_TOL = 1e-10


@dataclass
class MetricsReport:
    r2_per_dim: np.ndarray
    r2_mean: float
    pa_degrees: np.ndarray
    pa_mean: float
    pa_max: float
    orbit_distance: float
    sigma_gap_linf: float

    def to_row(self) -> dict:
        row = asdict(self)
        row["r2_per_dim"] = " ".join(f"{v:.10g}" for v in self.r2_per_dim)
        row["pa_degrees"] = " ".join(f"{v:.10g}" for v in self.pa_degrees)
        return row


def r_squared(S_true, Z):
    """Per-coordinate R^2 of regressing each true coordinate on ``[Z, 1]`` by OLS.

    Returns ``(per_dim, mean)``.
    """
    S = np.asarray(S_true, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if S.ndim != 2 or Z.ndim != 2 or S.shape[0] != Z.shape[0]:
        raise InvalidShape(f"row mismatch: {S.shape} vs {Z.shape}")
    n, d_Z = Z.shape
    if n <= d_Z + 1:
        raise InsufficientSamples(f"need n > d_Z + 1, got n={n}, d_Z={d_Z}")
    Sc = S - S.mean(axis=0)
    tss = np.sum(Sc * Sc, axis=0)
    if np.any(tss == 0.0):
        raise DegenerateTarget("a true coordinate is constant")
    # Intercept handled by centering both sides.
    Zc = Z - Z.mean(axis=0)
    coef, *_ = np.linalg.lstsq(Zc, Sc, rcond=None)
    resid = Sc - Zc @ coef
    rss = np.sum(resid * resid, axis=0)
    per_dim = 1.0 - rss / tss
    return per_dim, float(per_dim.mean())


def _span_basis(M: np.ndarray, label: str) -> np.ndarray:
    Mc = M - M.mean(axis=0)
    u, s, _ = np.linalg.svd(Mc, full_matrices=False)
    if s.size == 0 or s[-1] <= RANK_TOL * max(s[0], 1e-300):
        raise RankDeficientSpan(f"{label} does not have full column rank after centering")
    return u


def principal_angles(Z, S):
    """Principal angles (degrees, ascending) between the centered column spans.

    Returns ``(angles, mean, max)`` over ``min(d_Z, d_S)`` angles.
    """
    Z = np.asarray(Z, dtype=float)
    S = np.asarray(S, dtype=float)
    if Z.shape[0] != S.shape[0]:
        raise InvalidShape(f"row mismatch: {Z.shape} vs {S.shape}")
    if Z.shape[0] <= max(Z.shape[1], S.shape[1]):
        raise InsufficientSamples("need more rows than columns")
    qz = _span_basis(Z, "Z")
    qs = _span_basis(S, "S")
    cos = np.linalg.svd(qz.T @ qs, compute_uv=False)
    angles = np.degrees(np.arccos(np.clip(cos, 0.0, 1.0)))
    angles = np.sort(angles)
    return angles, float(angles.mean()), float(angles.max())


def procrustes(Z, Z_hat) -> np.ndarray:
    """Orthogonal ``Q`` (full ``O(d)``, reflections allowed) minimizing ``||Z_hat - Z Q||_F``."""
    u, _, vt = np.linalg.svd(np.asarray(Z).T @ np.asarray(Z_hat))
    return u @ vt


def view_orbit_distance(Z, Z_hat) -> float:
    """``(1/n) min_Q ||Z_hat - Z Q||_F^2`` for a single view."""
    Z = np.asarray(Z, dtype=float)
    Z_hat = np.asarray(Z_hat, dtype=float)
    if Z.shape != Z_hat.shape:
        raise InvalidShape(f"shape mismatch: {Z.shape} vs {Z_hat.shape}")
    r = Z_hat - Z @ procrustes(Z, Z_hat)
    return float(np.sum(r * r) / Z.shape[0])


def orbit_distance(Z, Z_hat, Zp, Z_hat_p) -> float:
    """Sum of both views' Procrustes residuals, divided by the sample count."""
    return view_orbit_distance(Z, Z_hat) + view_orbit_distance(Zp, Z_hat_p)


def singular_gap_linf(sigma_hat, sigma_ref) -> float:
    a = np.asarray(sigma_hat, dtype=float)
    b = np.asarray(sigma_ref, dtype=float)
    if a.shape != b.shape:
        raise InvalidShape(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0
