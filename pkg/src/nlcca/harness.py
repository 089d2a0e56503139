"""Configuration-driven experiment runner and report files.

An :class:`ExperimentConfig` names one protocol and its knobs.  :func:`run_experiment`
executes the protocol over every seed and sweep point and returns a
:class:`ReportBundle`; :func:`emit_report` and :func:`load_report` move bundles to
and from disk.

Files written by :func:`emit_report`:

``results.csv``
    One row per (sweep point, seed) with the columns in :data:`RESULT_COLUMNS`.
    Floats use ``repr`` so reading them back is exact.
``summary.json``
    ``config``, ``config_hash``, ``rows``, ``eval_samples``, ``aggregates``
    (``{sweep_value: {metric: {mean, std, median, count}}}``; population std,
    NaN entries skipped), ``failures``, ``checks``, ``wall_clock_s``.
``history/<name>.csv``
    Training curves (``step, J_hat, sigma_1.., eval_R2_f, eval_R2_fprime,
    orbit_distance``) and, for the reparameterization protocol, comparison curves
    (``step, sigma_gap_linf, orbit_distance_f, orbit_distance_fprime``).
``history/angles_<d_Z>_seed<s>.csv``
    Dimension-mismatch runs only: the full principal-angle profile
    (``index, angle_f, angle_fprime``) on the evaluation set.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .cca import empirical_cross_stats
from .encoder import TrainConfig, forward, train_cca, whiten_outputs
from .errors import (
    ConfigError,
    DivergedTraining,
    IllConditioned,
    NlccaError,
    RankDeficientSpan,
    ReportError,
    WrongExperiment,
)
from .latent import FAMILIES, default_rho, make_latent_spec, make_rng, rho_for_ratio, sample_sources
from .metrics import principal_angles, r_squared, singular_gap_linf, view_orbit_distance
from .mixing import decode, make_decoder
from .oracle import CheckResult, enumerate_hermite_spectrum, run_oracle_suite

EXPERIMENTS = (
    "identifiability",
    "reparam_invariance",
    "consistency",
    "ablate_source_dim",
    "ablate_dominance",
    "ablate_dim_mismatch",
    "oracle_check",
)

RESULT_COLUMNS = [
    "experiment",
    "family",
    "d_S",
    "d_Z",
    "seed",
    "sweep_value",
    "r2_f",
    "r2_fprime",
    "pa_mean_f",
    "pa_max_f",
    "pa_mean_fprime",
    "pa_max_fprime",
    "orbit_distance",
    "sigma_gap_linf",
    "J_hat_final",
    "steps",
    "wall_clock_s",
]
METRIC_COLUMNS = RESULT_COLUMNS[6:15] + ["wall_clock_s"]
_INT_COLUMNS = ("d_S", "d_Z", "seed", "steps")
_TEXT_COLUMNS = ("experiment", "family", "sweep_value")

# Desk-scale pass thresholds used by :func:`assess`.
THRESHOLDS = {
    "r2_gaussian": 0.95,
    "r2_family": 0.90,
    "reparam_gap": 0.02,
    "reparam_orbit": 0.3,
    "dominance_low_pa": 45.0,
    "dominance_high_pa": 15.0,
    "dominance_high_ratio": 1.2,
    "overcomplete_r2": 0.93,
}
R2_EXEMPT_FAMILIES = ("hypergeometric",)


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; see :data:`EXPERIMENTS` for protocol names.

    ``sweep`` holds the swept values: families for ``identifiability``, dataset
    sizes for ``consistency``, source dimensions, dominance ratios or latent
    dimensions for the three ablations.  An empty sweep means the protocol
    default.
    """

    experiment: str
    family: str = "gaussian"
    d_S: int = 5
    d_Z: int | None = None
    rho: tuple | None = None
    rho_high: float = 0.90
    rho_low: float = 0.85
    dominance_top: float = 0.6
    d_X: int = 20
    decoder_depth: int = 3
    cond_limit: float = 4.0
    hidden_widths: tuple = (32, 32, 32)
    steps: int = 20000
    batch_size: int = 1024
    learning_rate: float = 1e-4
    epsilon: float | str = 1e-3
    seeds: tuple = (0, 1, 2, 3, 4)
    sampling: str = "online"
    dataset_size: int | None = None
    sweep: tuple = ()
    eval_every: int = 1000
    eval_samples: int = 100_000
    log_every: int = 100
    record_wall_clock: bool = True
    oracle_random_vectors: int = 1000
    oracle_mc_samples: int = 1_000_000
    output_dir: str = "runs"

    def __post_init__(self):
        _validate(self)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @property
    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a key/value mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        if "experiment" not in doc:
            raise ConfigError("missing required key 'experiment'")
        kwargs = {}
        for k, v in doc.items():
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool)


def _validate(c: ExperimentConfig) -> None:
    def need(ok, msg):
        if not ok:
            raise ConfigError(msg)

    need(c.experiment in EXPERIMENTS, f"experiment must be one of {EXPERIMENTS}, got {c.experiment!r}")
    need(c.family in FAMILIES, f"family must be one of {FAMILIES}, got {c.family!r}")
    for name in ("d_S", "d_X", "decoder_depth", "steps", "batch_size", "eval_samples", "log_every", "eval_every"):
        need(_is_int(getattr(c, name)), f"{name} must be an integer")
    need(c.d_S >= 2, "d_S must be >= 2")
    need(c.d_Z is None or (_is_int(c.d_Z) and c.d_Z >= 1), "d_Z must be a positive integer or null")
    need(c.decoder_depth >= 1 and c.d_X >= 1, "decoder_depth and d_X must be >= 1")
    need(c.steps >= 0 and c.batch_size >= 2, "steps must be >= 0 and batch_size >= 2")
    need(c.eval_samples > 2 * max(c.d_S, c.d_Z or 0, 1), "eval_samples too small")
    need(c.eval_every >= 0 and c.log_every >= 0, "eval_every and log_every must be >= 0")
    for name in ("rho_high", "rho_low", "dominance_top", "cond_limit", "learning_rate"):
        need(_is_num(getattr(c, name)), f"{name} must be a number")
    need(0 < c.rho_low <= c.rho_high < 1, "need 0 < rho_low <= rho_high < 1")
    need(0 < c.dominance_top < 1, "dominance_top must lie in (0, 1)")
    need(c.cond_limit >= 1 and c.learning_rate > 0, "cond_limit must be >= 1, learning_rate > 0")
    if c.rho is not None:
        need(all(_is_num(r) for r in c.rho), "rho must be a list of numbers")
        need(len(c.rho) == c.d_S, "len(rho) must equal d_S")
        need(all(0 < r < 1 for r in c.rho), "every rho must lie in (0, 1)")
        need(list(c.rho) == sorted(c.rho, reverse=True), "rho must be sorted descending")
    need(c.epsilon == "schedule" or (_is_num(c.epsilon) and c.epsilon > 0), "epsilon must be > 0 or 'schedule'")
    need(isinstance(c.hidden_widths, tuple), "hidden_widths must be a list")
    need(all(_is_int(w) and w >= 1 for w in c.hidden_widths), "hidden_widths must be positive integers")
    need(isinstance(c.seeds, tuple) and len(c.seeds) > 0, "seeds must be a non-empty list")
    need(all(_is_int(s) and s >= 0 for s in c.seeds), "seeds must be non-negative integers")
    need(len(set(c.seeds)) == len(c.seeds), "seeds must be distinct")
    need(c.sampling in ("online", "fixed"), "sampling must be 'online' or 'fixed'")
    if c.sampling == "fixed" and c.experiment != "consistency":
        need(_is_int(c.dataset_size) and c.dataset_size >= 2, "fixed sampling needs dataset_size >= 2")
    need(isinstance(c.record_wall_clock, bool), "record_wall_clock must be a boolean")
    need(isinstance(c.output_dir, str) and c.output_dir != "", "output_dir must be a non-empty string")
    need(isinstance(c.sweep, tuple), "sweep must be a list")
    need(_is_int(c.oracle_random_vectors) and c.oracle_random_vectors >= 1, "oracle_random_vectors must be >= 1")
    need(_is_int(c.oracle_mc_samples) and c.oracle_mc_samples >= 1000, "oracle_mc_samples must be >= 1000")

    sw = c.sweep
    e = c.experiment
    if e == "identifiability":
        need(all(f in FAMILIES for f in sw), f"identifiability sweeps families from {FAMILIES}")
    elif e == "consistency":
        need(all(_is_int(n) and n >= 2 for n in sw), "consistency sweeps integer dataset sizes >= 2")
    elif e == "ablate_source_dim":
        need(all(_is_int(d) and d >= 2 for d in sw), "ablate_source_dim sweeps integers >= 2")
    elif e == "ablate_dominance":
        need(all(_is_num(r) and r > 0 for r in sw), "ablate_dominance sweeps positive ratios")
        for r in sw:
            need(r * c.dominance_top <= 1, f"ratio {r} with dominance_top {c.dominance_top} exceeds rho_1")
    elif e == "ablate_dim_mismatch":
        need(all(_is_int(d) and d >= 1 for d in sw), "ablate_dim_mismatch sweeps integers >= 1")
    elif e in ("reparam_invariance", "oracle_check"):
        need(len(sw) == 0, f"{e} takes no sweep")


def load_config(path) -> ExperimentConfig:
    """Read a JSON (``.json``) or TOML (anything else) configuration file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(raw.decode())
        else:
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            doc = tomllib.loads(raw.decode())
    except ValueError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


# --------------------------------------------------------------------------- bundle


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class ReportBundle:
    """Per-seed rows, training curves and failures of one experiment."""

    config: ExperimentConfig
    rows: list = field(default_factory=list)
    histories: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    @property
    def config_hash(self) -> str:
        return self.config.config_hash

    @property
    def aggregates(self) -> dict:
        return aggregate_rows(self.rows)

    def rows_at(self, sweep_value) -> list:
        key = _sweep_key(sweep_value)
        return [r for r in self.rows if r["sweep_value"] == key]

    def aggregate(self, sweep_value, metric: str) -> dict:
        return self.aggregates[_sweep_key(sweep_value)][metric]

    @property
    def failed_seeds(self) -> list:
        return [(f["sweep_value"], f["seed"]) for f in self.failures]


def _sweep_key(v) -> str:
    if isinstance(v, str):
        return v
    if _is_int(v):
        return str(int(v))
    return repr(float(v))


def _stat_block(vals) -> dict:
    a = np.array([v for v in vals if not math.isnan(v)], dtype=float)
    if a.size == 0:
        return {"mean": math.nan, "std": math.nan, "median": math.nan, "count": 0}
    return {
        "mean": float(np.mean(a)),
        "std": float(np.std(a)),
        "median": float(np.median(a)),
        "count": int(a.size),
    }


def aggregate_rows(rows) -> dict:
    """``{sweep_value: {metric: {mean, std, median, count}}}``, NaNs skipped."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r["sweep_value"], []).append(r)
    return {
        key: {m: _stat_block([float(r[m]) for r in grp]) for m in METRIC_COLUMNS} for key, grp in groups.items()
    }


# --------------------------------------------------------------------------- single runs


def _stream_seed(seed: int, *tag: int) -> int:
    return int(np.random.SeedSequence([seed, 0x5EED, *tag]).generate_state(1)[0])


def _train_config(cfg: ExperimentConfig, seed: int, d_Z: int, **over) -> TrainConfig:
    base = dict(
        steps=cfg.steps,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        epsilon=cfg.epsilon,
        seed=seed,
        d_Z=d_Z,
        hidden_widths=cfg.hidden_widths,
        sampling=cfg.sampling,
        dataset_size=cfg.dataset_size,
        eval_every=cfg.eval_every,
        eval_samples=cfg.eval_samples,
        log_every=cfg.log_every,
    )
    base.update(over)
    return TrainConfig(**base)


def _reference_spectrum(spec, d_Z: int) -> np.ndarray:
    """Population top-``d_Z`` canonical correlations reachable by the encoders."""
    if spec.family == "gaussian":
        return enumerate_hermite_spectrum(spec.rho, 4).values[:d_Z]
    ref = np.full(d_Z, math.nan)
    r = np.sort(np.asarray(spec.rho))[::-1][:d_Z]
    ref[: r.size] = r
    return ref


def _eval_singulars(Z, Zp, epsilon) -> np.ndarray:
    return empirical_cross_stats(Z, Zp, epsilon).singulars


def final_metrics(spec, enc, enc_p, eval_set, epsilon) -> dict:
    S, Sp, X, Xp = eval_set
    Z, _ = forward(enc, X, "eval")
    Zp, _ = forward(enc_p, Xp, "eval")
    out = {"r2_f": r_squared(S, Z)[1], "r2_fprime": r_squared(Sp, Zp)[1]}
    _, out["pa_mean_f"], out["pa_max_f"] = principal_angles(Z, S)
    _, out["pa_mean_fprime"], out["pa_max_fprime"] = principal_angles(Zp, Sp)
    Zw, Zpw = whiten_outputs(Z), whiten_outputs(Zp)
    if Z.shape[1] == S.shape[1]:
        out["orbit_distance"] = view_orbit_distance(Zw, whiten_outputs(S)) + view_orbit_distance(
            Zpw, whiten_outputs(Sp)
        )
    else:
        out["orbit_distance"] = math.nan
    ref = _reference_spectrum(spec, Z.shape[1])
    sig = _eval_singulars(Z, Zp, epsilon)
    out["sigma_gap_linf"] = singular_gap_linf(sig, ref) if not np.isnan(ref).any() else math.nan
    return out


def angle_profile(enc, enc_p, eval_set) -> Table:
    """Every principal angle (degrees, ascending) between learned and true spans, per view."""
    S, Sp, X, Xp = eval_set
    a_f = principal_angles(forward(enc, X, "eval")[0], S)[0]
    a_p = principal_angles(forward(enc_p, Xp, "eval")[0], Sp)[0]
    rows = [{"index": i + 1, "angle_f": float(f), "angle_fprime": float(g)} for i, (f, g) in enumerate(zip(a_f, a_p))]
    return Table(["index", "angle_f", "angle_fprime"], rows)


def _eval_epsilon(cfg: ExperimentConfig) -> float:
    return 1e-3 if cfg.epsilon == "schedule" else float(cfg.epsilon)


def _run_info(family, d_S, d_Z, rho, seed, sweep_value, source_space) -> dict:
    return {
        "family": family,
        "d_S": int(d_S),
        "d_Z": int(d_Z),
        "rho": [float(r) for r in rho],
        "seed": int(seed),
        "sweep_value": _sweep_key(sweep_value),
        "source_space": bool(source_space),
    }


def make_problem(cfg: ExperimentConfig, family, d_S, rho, seed, with_decoders=True, eval_tag: int = 3):
    """Latent spec, decoder pair and an evaluation set ``(S, S', X, X')`` for one seed.

    Decoders and evaluation rows come from streams derived from ``seed`` that
    never overlap the training streams.
    """
    spec = make_latent_spec(family, d_S, rho)
    d_X = max(cfg.d_X, d_S)
    decoders = None
    if with_decoders:
        decoders = (
            make_decoder(d_S, d_X, cfg.decoder_depth, _stream_seed(seed, 1), cfg.cond_limit),
            make_decoder(d_S, d_X, cfg.decoder_depth, _stream_seed(seed, 2), cfg.cond_limit),
        )
    S, Sp = sample_sources(spec, cfg.eval_samples, make_rng(_stream_seed(seed, eval_tag)))
    if decoders is None:
        eval_set = (S, Sp, S, Sp)
    else:
        eval_set = (S, Sp, decode(decoders[0], S), decode(decoders[1], Sp))
    return spec, decoders, eval_set


def _base_row(cfg, family, d_S, d_Z, seed, sweep_value, steps) -> dict:
    row = {c: math.nan for c in RESULT_COLUMNS}
    row.update(
        experiment=cfg.experiment,
        family=family,
        d_S=int(d_S),
        d_Z=int(d_Z),
        seed=int(seed),
        sweep_value=_sweep_key(sweep_value),
        steps=int(steps),
    )
    return row


def _last_J(history) -> float:
    return float(history.rows[-1]["J_hat"]) if history.rows else math.nan


def _history_table(history) -> Table:
    return Table(history.columns, [dict(r) for r in history.rows])


def _standard_run(cfg, bundle, *, family, d_S, d_Z, rho, seed, sweep_value, checkpoints=None, **train_over):
    t0 = time.perf_counter()
    spec, decoders, eval_set = make_problem(cfg, family, d_S, rho, seed)
    tcfg = _train_config(cfg, seed, d_Z, **train_over)
    enc, enc_p, hist = train_cca(tcfg, spec, decoders, eval_set)
    row = _base_row(cfg, family, d_S, d_Z, seed, sweep_value, tcfg.steps)
    row.update(final_metrics(spec, enc, enc_p, eval_set, _eval_epsilon(cfg)))
    row["J_hat_final"] = _last_J(hist)
    bundle.histories[f"{_sweep_key(sweep_value)}_seed{seed}"] = _history_table(hist)
    if cfg.experiment == "ablate_dim_mismatch":
        bundle.histories[f"angles_{_sweep_key(sweep_value)}_seed{seed}"] = angle_profile(enc, enc_p, eval_set)
    if checkpoints is not None:
        info = _run_info(family, d_S, d_Z, spec.rho, seed, sweep_value, False)
        checkpoints.append((f"{_sweep_key(sweep_value)}_seed{seed}", enc, enc_p, hist.states, info))
    row["wall_clock_s"] = time.perf_counter() - t0 if cfg.record_wall_clock else 0.0
    return row


def _reparam_run(cfg, bundle, seed, checkpoints=None):
    """Observation-space pair vs source-space pair, compared at every evaluation step."""
    t0 = time.perf_counter()
    rho = cfg.rho if cfg.rho is not None else default_rho(cfg.d_S, cfg.rho_high, cfg.rho_low)
    d_Z = cfg.d_Z or cfg.d_S
    spec, decoders, eval_set = make_problem(cfg, cfg.family, cfg.d_S, rho, seed)
    S, Sp, X, Xp = eval_set
    eps = _eval_epsilon(cfg)
    snapshots = {}

    def keep(step, enc, enc_p, row):
        Z, _ = forward(enc, X, "eval")
        Zp, _ = forward(enc_p, Xp, "eval")
        snapshots[step] = (Z, Zp)

    curve = Table(["step", "sigma_gap_linf", "orbit_distance_f", "orbit_distance_fprime"])

    def compare(step, enc, enc_p, row):
        if step not in snapshots:
            return
        Zo, Zpo = snapshots[step]
        Zs, _ = forward(enc, S, "eval")
        Zps, _ = forward(enc_p, Sp, "eval")
        gap = singular_gap_linf(_eval_singulars(Zo, Zpo, eps), _eval_singulars(Zs, Zps, eps))
        try:
            od_f = view_orbit_distance(whiten_outputs(Zs), whiten_outputs(Zo))
            od_fp = view_orbit_distance(whiten_outputs(Zps), whiten_outputs(Zpo))
        except IllConditioned:
            od_f = od_fp = math.nan
        curve.rows.append({"step": step, "sigma_gap_linf": gap, "orbit_distance_f": od_f, "orbit_distance_fprime": od_fp})

    tcfg = _train_config(cfg, seed, d_Z)
    enc, enc_p, hist = train_cca(tcfg, spec, decoders, eval_set, callback=keep)
    enc_s, enc_sp, hist_s = train_cca(tcfg, spec, None, (S, Sp, S, Sp), callback=compare)
    if tcfg.eval_every == 0 or tcfg.steps == 0:
        keep(0, enc, enc_p, None)
        compare(0, enc_s, enc_sp, None)

    row = _base_row(cfg, cfg.family, cfg.d_S, d_Z, seed, "observation_vs_source", tcfg.steps)
    row.update(final_metrics(spec, enc, enc_p, eval_set, eps))
    last = curve.rows[-1]
    row["orbit_distance"] = max(last["orbit_distance_f"], last["orbit_distance_fprime"])
    row["sigma_gap_linf"] = last["sigma_gap_linf"]
    row["J_hat_final"] = _last_J(hist)
    bundle.histories[f"observation_seed{seed}"] = _history_table(hist)
    bundle.histories[f"source_seed{seed}"] = _history_table(hist_s)
    bundle.histories[f"comparison_seed{seed}"] = curve
    if checkpoints is not None:
        for name, a, b, states, src in (
            ("observation", enc, enc_p, hist.states, False),
            ("source", enc_s, enc_sp, hist_s.states, True),
        ):
            info = _run_info(cfg.family, cfg.d_S, d_Z, spec.rho, seed, "observation_vs_source", src)
            checkpoints.append((f"{name}_seed{seed}", a, b, states, info))
    row["wall_clock_s"] = time.perf_counter() - t0 if cfg.record_wall_clock else 0.0
    return row


# --------------------------------------------------------------------------- protocols


def _plan(cfg: ExperimentConfig) -> list[dict]:
    """Sweep points as keyword dictionaries for :func:`_standard_run`."""
    base_rho = cfg.rho if cfg.rho is not None else default_rho(cfg.d_S, cfg.rho_high, cfg.rho_low)
    e = cfg.experiment
    if e == "identifiability":
        fams = cfg.sweep or (cfg.family,)
        return [dict(family=f, d_S=cfg.d_S, d_Z=cfg.d_Z or cfg.d_S, rho=base_rho, sweep_value=f) for f in fams]
    if e == "consistency":
        sizes = cfg.sweep or (1000, 10_000, 100_000)
        return [
            dict(
                family=cfg.family,
                d_S=cfg.d_S,
                d_Z=cfg.d_Z or cfg.d_S,
                rho=base_rho,
                sweep_value=int(n),
                sampling="fixed",
                dataset_size=int(n),
                epsilon="schedule",
            )
            for n in sizes
        ]
    if e == "ablate_source_dim":
        dims = cfg.sweep or (2, 5, 8)
        return [
            dict(family=cfg.family, d_S=int(d), d_Z=int(d), rho=default_rho(int(d), cfg.rho_high, cfg.rho_low), sweep_value=int(d))
            for d in dims
        ]
    if e == "ablate_dominance":
        ratios = cfg.sweep or (0.5, 0.8, 1.2, 1.5)
        return [
            dict(
                family=cfg.family,
                d_S=cfg.d_S,
                d_Z=cfg.d_S,
                rho=rho_for_ratio(cfg.d_S, float(r), cfg.dominance_top),
                sweep_value=float(r),
            )
            for r in ratios
        ]
    if e == "ablate_dim_mismatch":
        dz = cfg.sweep or ((cfg.d_Z,) if cfg.d_Z else (cfg.d_S + 2,))
        return [dict(family=cfg.family, d_S=cfg.d_S, d_Z=int(d), rho=base_rho, sweep_value=int(d)) for d in dz]
    raise WrongExperiment(f"no sweep plan for {e!r}")


def _record_failure(bundle, sweep_value, seed, exc) -> None:
    bundle.failures.append(
        {"sweep_value": _sweep_key(sweep_value), "seed": int(seed), "error": type(exc).__name__, "message": str(exc)}
    )


def _run_points(cfg, bundle, points, checkpoints, progress):
    for point in points:
        for seed in cfg.seeds:
            if progress:
                progress(f"{cfg.experiment} sweep={point['sweep_value']} seed={seed}")
            try:
                bundle.rows.append(_standard_run(cfg, bundle, seed=seed, checkpoints=checkpoints, **point))
            except (DivergedTraining, IllConditioned, RankDeficientSpan) as exc:
                _record_failure(bundle, point["sweep_value"], seed, exc)


def run_experiment(cfg: ExperimentConfig, *, checkpoints=None, progress=None) -> ReportBundle:
    """Execute the protocol named by ``cfg.experiment`` over every seed.

    Diverged or collapsed runs are recorded in ``bundle.failures`` and do not
    stop the remaining seeds.  ``checkpoints``, when a list, receives
    ``(name, enc, enc_prime, states)`` tuples for every finished run.
    """
    if cfg.experiment == "ablate_dim_mismatch":
        return run_dim_mismatch(cfg, checkpoints=checkpoints, progress=progress)
    t0 = time.perf_counter()
    bundle = ReportBundle(cfg)
    if cfg.experiment == "oracle_check":
        bundle.checks = run_oracle_suite(cfg.seeds[0], cfg.oracle_random_vectors, cfg.oracle_mc_samples)
    elif cfg.experiment == "reparam_invariance":
        for seed in cfg.seeds:
            if progress:
                progress(f"reparam_invariance seed={seed}")
            try:
                bundle.rows.append(_reparam_run(cfg, bundle, seed, checkpoints))
            except (DivergedTraining, IllConditioned, RankDeficientSpan) as exc:
                _record_failure(bundle, "observation_vs_source", seed, exc)
    else:
        _run_points(cfg, bundle, _plan(cfg), checkpoints, progress)
    bundle.wall_clock_s = time.perf_counter() - t0 if cfg.record_wall_clock else 0.0
    bundle.checks = bundle.checks or assess(bundle)
    return bundle


def run_dim_mismatch(cfg: ExperimentConfig, *, checkpoints=None, progress=None) -> ReportBundle:
    """Over- and under-complete training; every swept ``d_Z`` must differ from ``d_S``."""
    if cfg.experiment != "ablate_dim_mismatch":
        raise WrongExperiment(f"expected ablate_dim_mismatch, got {cfg.experiment!r}")
    points = _plan(cfg)
    same = [p["d_Z"] for p in points if p["d_Z"] == cfg.d_S]
    if same:
        raise WrongExperiment(f"d_Z = d_S = {cfg.d_S} is not a dimension mismatch")
    t0 = time.perf_counter()
    bundle = ReportBundle(cfg)
    _run_points(cfg, bundle, points, checkpoints, progress)
    bundle.wall_clock_s = time.perf_counter() - t0 if cfg.record_wall_clock else 0.0
    bundle.checks = assess(bundle)
    return bundle


# --------------------------------------------------------------------------- assessment


def _strictly_monotone(values, increasing: bool) -> bool:
    pairs = zip(values, values[1:])
    return all((b > a) if increasing else (b < a) for a, b in pairs)


def assess(bundle: ReportBundle) -> list[CheckResult]:
    """Desk-scale pass/fail checks for a finished bundle (see :data:`THRESHOLDS`)."""
    cfg = bundle.config
    agg = bundle.aggregates
    t = THRESHOLDS
    out = []
    e = cfg.experiment
    if e == "oracle_check":
        return list(bundle.checks)
    if e == "identifiability":
        for fam, stats in agg.items():
            bar = t["r2_gaussian"] if fam == "gaussian" else t["r2_family"]
            lo = min(stats["r2_f"]["mean"], stats["r2_fprime"]["mean"])
            detail = f"mean R2 f={stats['r2_f']['mean']:.4f} f'={stats['r2_fprime']['mean']:.4f} (bar {bar})"
            ok = lo >= bar
            if fam in R2_EXEMPT_FAMILIES:
                out.append(CheckResult(f"r2_{fam}_recorded", True, detail + " [exempt]"))
            else:
                out.append(CheckResult(f"r2_{fam}", bool(ok), detail))
        for fam in (cfg.sweep or (cfg.family,)):
            if fam not in agg and fam not in R2_EXEMPT_FAMILIES:
                out.append(CheckResult(f"r2_{fam}", False, "every seed failed"))
    elif e == "reparam_invariance":
        stats = agg.get("observation_vs_source")
        if stats is None:
            return [CheckResult("reparam_invariance", False, "every seed failed")]
        gap, orb = stats["sigma_gap_linf"]["median"], stats["orbit_distance"]["median"]
        out.append(CheckResult("sigma_gap", gap < t["reparam_gap"], f"median gap {gap:.4g}"))
        out.append(CheckResult("orbit_distance_per_view", orb < t["reparam_orbit"], f"median max-view orbit {orb:.4g}"))
    elif e == "consistency":
        keys = sorted(agg, key=float)
        r2 = [min(agg[k]["r2_f"]["median"], agg[k]["r2_fprime"]["median"]) for k in keys]
        r2f = [agg[k]["r2_f"]["median"] for k in keys]
        r2p = [agg[k]["r2_fprime"]["median"] for k in keys]
        orb = [agg[k]["orbit_distance"]["median"] for k in keys]
        ok_r2 = _strictly_monotone(r2f, True) and _strictly_monotone(r2p, True) and len(keys) >= 2
        out.append(CheckResult("r2_increasing", ok_r2, f"n={keys} median R2 {np.round(r2, 4).tolist()}"))
        ok_orb = _strictly_monotone(orb, False) and len(keys) >= 2
        out.append(CheckResult("orbit_decreasing", ok_orb, f"n={keys} median orbit {np.round(orb, 4).tolist()}"))
    elif e == "ablate_dominance":
        for key, stats in sorted(agg.items(), key=lambda kv: float(kv[0])):
            r = float(key)
            pa = max(stats["pa_max_f"]["median"], stats["pa_max_fprime"]["median"])
            pa_lo = min(stats["pa_max_f"]["median"], stats["pa_max_fprime"]["median"])
            if r < 1:
                out.append(CheckResult(f"ratio_{key}", pa_lo >= t["dominance_low_pa"], f"median PA_max {pa_lo:.2f} deg (>= 45)"))
            elif r >= t["dominance_high_ratio"]:
                out.append(CheckResult(f"ratio_{key}", pa <= t["dominance_high_pa"], f"median PA_max {pa:.2f} deg (<= 15)"))
    elif e == "ablate_dim_mismatch":
        for key, stats in agg.items():
            if int(key) > cfg.d_S:
                lo = min(stats["r2_f"]["mean"], stats["r2_fprime"]["mean"])
                out.append(CheckResult(f"overcomplete_dZ{key}", lo >= t["overcomplete_r2"], f"mean R2 {lo:.4f}"))
    if bundle.failures and e != "identifiability":
        out.append(CheckResult("no_failed_seeds", False, f"{len(bundle.failures)} failed runs"))
    return out


# --------------------------------------------------------------------------- files


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, math.nan)) for c in columns])


def _read_table(path: Path) -> Table:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for rec in reader:
            row = {}
            for c, v in zip(columns, rec):
                if c in _TEXT_COLUMNS:
                    row[c] = v
                elif c in _INT_COLUMNS or c in ("step", "index"):
                    row[c] = int(v)
                else:
                    row[c] = float(v)
            rows.append(row)
    return Table(columns, rows)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def emit_report(bundle: ReportBundle, output_dir=None) -> list[Path]:
    """Write ``results.csv``, ``summary.json`` and ``history/*.csv``; returns the paths."""
    out = Path(output_dir if output_dir is not None else bundle.config.output_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        results = out / "results.csv"
        _write_table(results, RESULT_COLUMNS, bundle.rows)
        written.append(results)
        hist_dir = out / "history"
        if bundle.histories:
            hist_dir.mkdir(exist_ok=True)
        for name, table in sorted(bundle.histories.items()):
            p = hist_dir / f"{name}.csv"
            _write_table(p, table.columns, table.rows)
            written.append(p)
        summary = {
            "experiment": bundle.config.experiment,
            "config": bundle.config.to_dict(),
            "config_hash": bundle.config_hash,
            "rows": len(bundle.rows),
            "eval_samples": bundle.config.eval_samples,
            "aggregates": bundle.aggregates,
            "failures": bundle.failures,
            "checks": [{"name": c.name, "passed": bool(c.passed), "detail": c.detail} for c in bundle.checks],
            "wall_clock_s": bundle.wall_clock_s,
            "kernel_backend": kernels.BACKEND,
        }
        p = out / "summary.json"
        p.write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
        written.append(p)
    except OSError as exc:
        raise ReportError(f"cannot write report under {out}: {exc}") from exc
    return written


def _same(a, b, tol=1e-12) -> bool:
    if a is None:
        return b is None or (isinstance(b, float) and math.isnan(b))
    if isinstance(b, float) and math.isnan(b):
        return False
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def load_report(output_dir) -> ReportBundle:
    """Read a report back and check its stored aggregates against the rows."""
    out = Path(output_dir)
    try:
        summary = json.loads((out / "summary.json").read_text())
        table = _read_table(out / "results.csv")
        histories = {}
        hist_dir = out / "history"
        if hist_dir.is_dir():
            for p in sorted(hist_dir.glob("*.csv")):
                histories[p.stem] = _read_table(p)
    except (OSError, ValueError, StopIteration) as exc:
        raise ReportError(f"cannot read report under {out}: {exc}") from exc
    if table.columns != RESULT_COLUMNS:
        raise ReportError(f"{out / 'results.csv'} has unexpected columns")
    try:
        cfg = ExperimentConfig.from_dict(summary["config"])
    except NlccaError as exc:
        raise ReportError(f"{out / 'summary.json'} holds an invalid config: {exc}") from exc
    if cfg.config_hash != summary["config_hash"]:
        raise ReportError("config hash does not match the stored config")
    bundle = ReportBundle(
        cfg,
        table.rows,
        histories,
        summary.get("failures", []),
        [CheckResult(c["name"], c["passed"], c["detail"]) for c in summary.get("checks", [])],
        summary.get("wall_clock_s", 0.0),
    )
    stored = summary["aggregates"]
    fresh = bundle.aggregates
    if set(stored) != set(fresh):
        raise ReportError("aggregate groups do not match results.csv")
    for key, metrics in fresh.items():
        for m, block in metrics.items():
            for stat, v in block.items():
                if not _same(stored[key][m][stat], v):
                    raise ReportError(f"aggregate {key}/{m}/{stat} does not match results.csv")
    return bundle


def default_output_dir(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.output_dir, f"{cfg.experiment}-{cfg.config_hash}")


__all__ = [
    "EXPERIMENTS",
    "RESULT_COLUMNS",
    "THRESHOLDS",
    "ExperimentConfig",
    "ReportBundle",
    "Table",
    "aggregate_rows",
    "assess",
    "default_output_dir",
    "emit_report",
    "load_config",
    "load_report",
    "final_metrics",
    "make_problem",
    "run_dim_mismatch",
    "run_experiment",
]
