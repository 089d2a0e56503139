"""Random injective generators mapping sources to observations.

A decoder is an orthonormal-column lift ``d_S -> d_X`` followed by
``depth - 1`` square layers whose spectra are clipped to a bounded condition
number; every layer is followed by a leaky (strictly monotone) activation.
No biases, so the origin maps to the origin.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidDimension, InvalidShape
from .latent import make_rng

LEAKY_SLOPE = 0.2


@dataclass
class DecoderParams:
    layer_weights: list
    d_S: int
    d_X: int
    alpha: float = LEAKY_SLOPE
    seed: int = 0
    cond_limit: float = 4.0

    @property
    def layer_count(self) -> int:
        return len(self.layer_weights)

    def condition_numbers(self) -> list[float]:
        out = []
        for w in self.layer_weights[1:]:
            s = np.linalg.svd(w, compute_uv=False)
            out.append(float(s[0] / s[-1]))
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "d_S": self.d_S,
                "d_X": self.d_X,
                "alpha": self.alpha,
                "seed": self.seed,
                "cond_limit": self.cond_limit,
                "layer_weights": [w.tolist() for w in self.layer_weights],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DecoderParams":
        doc = json.loads(text)
        return cls(
            [np.asarray(w, dtype=float) for w in doc["layer_weights"]],
            int(doc["d_S"]),
            int(doc["d_X"]),
            float(doc["alpha"]),
            int(doc["seed"]),
            float(doc["cond_limit"]),
        )


def _clip_spectrum(w: np.ndarray, cond_limit: float) -> np.ndarray:
    u, s, vt = np.linalg.svd(w)
    s = np.clip(s, s[0] / cond_limit, s[0]) / s[0]
    return (u * s) @ vt


def make_decoder(
    d_S: int,
    d_X: int,
    depth: int = 3,
    seed: int = 0,
    cond_limit: float = 4.0,
    alpha: float = LEAKY_SLOPE,
) -> DecoderParams:
    """Random decoder with every square layer's condition number ``<= cond_limit``.

    Square layers are normalized to unit spectral norm, so the whole map is
    1-Lipschitz.
    """
    if d_S < 1 or d_X < d_S:
        raise InvalidDimension(f"need d_X >= d_S >= 1, got d_S={d_S}, d_X={d_X}")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if cond_limit < 1:
        raise ValueError(f"cond_limit must be >= 1, got {cond_limit}")
    rng = make_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d_X, d_S)))
    lift = (q * np.sign(np.diag(r))).T  # d_S x d_X, orthonormal rows
    layers = [lift]
    for _ in range(depth - 1):
        layers.append(_clip_spectrum(rng.standard_normal((d_X, d_X)), cond_limit))
    return DecoderParams(layers, d_S, d_X, float(alpha), seed, float(cond_limit))


def decode(dec: DecoderParams, S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[1] != dec.d_S:
        raise InvalidShape(f"expected (n, {dec.d_S}) sources, got {S.shape}")
    h = S
    for w in dec.layer_weights:
        h = kernels.leaky(h @ w, dec.alpha)
    return h
