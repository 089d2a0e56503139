"""Additive latent model ``s = a + c``, ``s' = b + c`` with tunable canonical correlations.

Per coordinate, ``a`` and ``b`` share one parameter set and ``c`` another (same
family), so ``Corr(s_i, s'_i) = Var(c_i) / (Var(a_i) + Var(c_i))``.  Samples are
standardized with exact population moments.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidCorrelation, InvalidDimension, UnrealizableCorrelation

FAMILIES = ("gaussian", "binomial", "gamma", "poisson", "hypergeometric")

GRID_TOL = 1e-3

# Per-family defaults for the "total" knob (shape, rate, trials, draws).
DEFAULT_TOTALS = {
    "gamma": 4.0,
    "poisson": 8.0,
    "binomial": 40,
    "hypergeometric": 40,
}
HYPERGEOM_POPULATION = 100
HYPERGEOM_SUCCESSES = 50
# The population is enlarged in these steps until every coordinate is realizable.
HYPERGEOM_POPULATIONS = tuple(range(HYPERGEOM_POPULATION, 1001, 100))


class Dominance(NamedTuple):
    holds: bool
    ratio: float


def _validate_rho(rho) -> np.ndarray:
    r = np.asarray(rho, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise InvalidDimension(f"rho must be a non-empty vector, got shape {r.shape}")
    if not np.all(np.isfinite(r)) or np.any(r <= 0.0) or np.any(r >= 1.0):
        raise InvalidCorrelation(f"every rho_i must lie in (0, 1), got {r.tolist()}")
    return r


def check_dominance(rho) -> Dominance:
    """First-order canonical dominance ``rho_min / rho_max**2`` and whether it exceeds 1."""
    r = _validate_rho(rho)
    top, bottom = float(r.max()), float(r.min())
    ratio = bottom / top**2
    return Dominance(bottom > top * top, ratio)


def default_rho(d: int, high: float = 0.90, low: float = 0.85) -> np.ndarray:
    """Equally spaced descending correlations on ``[low, high]``."""
    if d == 1:
        return np.array([high])
    return np.linspace(high, low, d)


def rho_for_ratio(d: int, ratio: float, top: float = 0.6) -> np.ndarray:
    """Descending correlations on ``[ratio * top**2, top]`` (dominance ablation grid)."""
    bottom = ratio * top * top
    if not 0.0 < bottom <= top < 1.0:
        raise InvalidCorrelation(f"ratio {ratio} with top {top} gives rho_min={bottom}")
    return np.linspace(top, bottom, d)


def _hypergeom_var(m, n_pop=HYPERGEOM_POPULATION, k=HYPERGEOM_SUCCESSES):
    m = np.asarray(m, dtype=float)
    p = k / n_pop
    return m * p * (1.0 - p) * (n_pop - m) / (n_pop - 1.0)


@dataclass(frozen=True)
class LatentSpec:
    family: str
    rho: tuple
    family_params: dict = field(default_factory=dict)

    @property
    def d_S(self) -> int:
        return len(self.rho)

    def component_moments(self):
        """(mean_a, var_a, mean_c, var_c) arrays; ``b`` is distributed like ``a``."""
        fp = self.family_params
        f = self.family
        if f == "gaussian":
            va, vc = np.asarray(fp["var_a"], float), np.asarray(fp["var_c"], float)
            return np.zeros_like(va), va, np.zeros_like(vc), vc
        if f == "gamma":
            ka, kc = np.asarray(fp["shape_a"], float), np.asarray(fp["shape_c"], float)
            th = float(fp["scale"])
            return ka * th, ka * th * th, kc * th, kc * th * th
        if f == "poisson":
            la, lc = np.asarray(fp["rate_a"], float), np.asarray(fp["rate_c"], float)
            return la, la, lc, lc
        if f == "binomial":
            na, nc = np.asarray(fp["trials_a"], float), np.asarray(fp["trials_c"], float)
            p = float(fp["p"])
            return na * p, na * p * (1 - p), nc * p, nc * p * (1 - p)
        if f == "hypergeometric":
            ma, mc = np.asarray(fp["draws_a"], float), np.asarray(fp["draws_c"], float)
            n_pop, k = int(fp["population"]), int(fp["successes"])
            p = k / n_pop
            return (ma * p, _hypergeom_var(ma, n_pop, k), mc * p, _hypergeom_var(mc, n_pop, k))
        raise ValueError(f"unknown family {f!r}")

    @property
    def standardizers(self):
        """Per-coordinate (mean, std) of ``s`` (identical for ``s'``)."""
        ma, va, mc, vc = self.component_moments()
        return ma + mc, np.sqrt(va + vc)

    def realized_rho(self) -> np.ndarray:
        _, va, _, vc = self.component_moments()
        return vc / (va + vc)

    def to_json(self) -> str:
        return json.dumps(
            {
                "family": self.family,
                "d_S": self.d_S,
                "rho": list(self.rho),
                "family_params": self.family_params,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "LatentSpec":
        doc = json.loads(text)
        rho = doc["rho"]
        if int(doc.get("d_S", len(rho))) != len(rho):
            raise InvalidDimension("d_S does not match len(rho)")
        spec = cls(doc["family"], tuple(float(r) for r in rho), doc.get("family_params") or {})
        if not spec.family_params:
            return make_latent_spec(spec.family, spec.d_S, spec.rho)
        if np.max(np.abs(spec.realized_rho() - np.asarray(rho))) > GRID_TOL:
            raise UnrealizableCorrelation("family_params do not realize rho")
        return spec


def _grid_split(rho: float, total: int, max_total: int):
    for t in range(int(total), int(max_total) + 1):
        k = int(round(rho * t))
        if 1 <= k <= t - 1 and abs(k / t - rho) <= GRID_TOL:
            return t - k, k
    raise UnrealizableCorrelation(
        f"no integer split with total in [{total}, {max_total}] realizes rho={rho}"
    )


def _hypergeom_split(rho: float, total: int, n_pop: int, k: int):
    m = np.arange(1, n_pop)
    v = _hypergeom_var(m, n_pop, k)
    ratio = v[None, :] / (v[:, None] + v[None, :])  # [m_a, m_c]
    ok = np.abs(ratio - rho) <= GRID_TOL
    if not ok.any():
        raise UnrealizableCorrelation(f"no hypergeometric draw pair realizes rho={rho}")
    ia, ic = np.nonzero(ok)
    cost = np.abs(m[ia] + m[ic] - total) + np.abs(ratio[ia, ic] - rho)
    j = int(np.argmin(cost))
    return int(m[ia[j]]), int(m[ic[j]])


def make_latent_spec(family: str, d_S: int, rho=None, *, total=None, max_total=None) -> LatentSpec:
    """Build a :class:`LatentSpec` whose family parameters realize ``rho``.

    ``total`` overrides the family's default total shape/rate/trials/draws.
    For discrete families the integer grid is searched over totals in
    ``[total, max_total]`` (default ``4 * total``); a coordinate that no grid
    point matches within ``1e-3`` raises :class:`UnrealizableCorrelation`.
    """
    family = str(family).lower()
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    if int(d_S) != d_S or d_S < 2:
        raise InvalidDimension(f"d_S must be an integer >= 2, got {d_S}")
    d_S = int(d_S)
    r = default_rho(d_S) if rho is None else _validate_rho(rho)
    if r.size != d_S:
        raise InvalidDimension(f"len(rho)={r.size} != d_S={d_S}")
    if np.any(np.diff(r) > 0):
        raise InvalidCorrelation(f"rho must be sorted descending, got {r.tolist()}")
    if total is None:
        total = DEFAULT_TOTALS.get(family)

    if family == "gaussian":
        params = {"var_a": (1.0 - r).tolist(), "var_c": r.tolist()}
    elif family == "gamma":
        params = {
            "shape_a": (total * (1.0 - r)).tolist(),
            "shape_c": (total * r).tolist(),
            "scale": 1.0,
        }
    elif family == "poisson":
        params = {"rate_a": (total * (1.0 - r)).tolist(), "rate_c": (total * r).tolist()}
    elif family == "binomial":
        hi = 4 * int(total) if max_total is None else int(max_total)
        splits = [_grid_split(float(x), int(total), hi) for x in r]
        params = {
            "trials_a": [a for a, _ in splits],
            "trials_c": [c for _, c in splits],
            "p": 0.5,
        }
    else:
        splits = None
        for n_pop in HYPERGEOM_POPULATIONS:
            try:
                splits = [_hypergeom_split(float(x), int(total), n_pop, n_pop // 2) for x in r]
                break
            except UnrealizableCorrelation:
                continue
        if splits is None:
            raise UnrealizableCorrelation(
                f"no hypergeometric population up to {HYPERGEOM_POPULATIONS[-1]} realizes rho={r.tolist()}"
            )
        params = {
            "draws_a": [a for a, _ in splits],
            "draws_c": [c for _, c in splits],
            "population": n_pop,
            "successes": n_pop // 2,
        }
    return LatentSpec(family, tuple(float(x) for x in r), params)


def population_cross_cov(spec: LatentSpec) -> np.ndarray:
    return np.diag(np.asarray(spec.rho, dtype=float))


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; passes existing generators through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def _draw(spec: LatentSpec, which: str, n: int, rng: np.random.Generator) -> np.ndarray:
    fp, f, d = spec.family_params, spec.family, spec.d_S
    shape = (n, d)
    if f == "gaussian":
        return rng.standard_normal(shape) * np.sqrt(np.asarray(fp[f"var_{which}"], float))
    if f == "gamma":
        return rng.gamma(np.asarray(fp[f"shape_{which}"], float), float(fp["scale"]), size=shape)
    if f == "poisson":
        return rng.poisson(np.asarray(fp[f"rate_{which}"], float), size=shape).astype(float)
    if f == "binomial":
        return rng.binomial(np.asarray(fp[f"trials_{which}"]), float(fp["p"]), size=shape).astype(float)
    k, n_pop = int(fp["successes"]), int(fp["population"])
    return rng.hypergeometric(k, n_pop - k, np.asarray(fp[f"draws_{which}"]), size=shape).astype(float)


def sample_sources(spec: LatentSpec, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw standardized ``(S, S')`` from an explicit generator stream."""
    rng = make_rng(rng)
    a = _draw(spec, "a", n, rng)
    b = _draw(spec, "a", n, rng)
    c = _draw(spec, "c", n, rng)
    mu, sd = spec.standardizers
    return (a + c - mu) / sd, (b + c - mu) / sd


@dataclass(frozen=True)
class SourceBatch:
    S: np.ndarray
    S_prime: np.ndarray
    seed: int
    spec_id: str

    @property
    def n(self) -> int:
        return self.S.shape[0]


def spec_id(spec: LatentSpec) -> str:
    import hashlib

    return hashlib.sha256(spec.to_json().encode()).hexdigest()[:16]


def sample_source_pair(spec: LatentSpec, n: int, seed: int) -> SourceBatch:
    """Deterministic paired source batch for ``(spec, n, seed)``."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    S, Sp = sample_sources(spec, n, make_rng(seed))
    return SourceBatch(S, Sp, seed, spec_id(spec))
