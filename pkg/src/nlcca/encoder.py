"""Residual batch-normalized MLP encoders, hand-written backprop, Adam, and the CCA training loop."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cca import cca_gradient_from_stats, empirical_cross_stats, inv_sqrt_psd
from .errors import (
    CacheMismatch,
    DivergedTraining,
    IllConditioned,
    InsufficientBatch,
    InsufficientSamples,
    InvalidShape,
    NonFiniteInput,
)
from .latent import LatentSpec, make_rng, sample_sources
from .metrics import r_squared, view_orbit_distance
from .mixing import LEAKY_SLOPE, DecoderParams, decode

BN_EPS = 1e-5


@dataclass
class HiddenLayer:
    W: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    residual: bool


@dataclass
class EncoderParams:
    hidden: list
    W_out: np.ndarray
    b_out: np.ndarray
    d_in: int
    d_Z: int
    seed: int = 0
    alpha: float = LEAKY_SLOPE
    momentum: float = 0.1
    version: int = 0

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """Trainable arrays by name; the arrays are live views (updated in place)."""
        out = []
        for i, layer in enumerate(self.hidden):
            out += [(f"h{i}.W", layer.W), (f"h{i}.gamma", layer.gamma), (f"h{i}.beta", layer.beta)]
        out += [("out.W", self.W_out), ("out.b", self.b_out)]
        return out

    def n_parameters(self) -> int:
        return sum(a.size for _, a in self.parameters())

    def copy(self) -> "EncoderParams":
        return copy.deepcopy(self)

    def to_arrays(self) -> dict:
        arrays = dict(self.parameters())
        for i, layer in enumerate(self.hidden):
            arrays[f"h{i}.running_mean"] = layer.running_mean
            arrays[f"h{i}.running_var"] = layer.running_var
        return arrays


def init_encoder(d_in: int, d_Z: int, hidden_widths=(32, 32, 32), seed: int = 0) -> EncoderParams:
    """He-initialized encoder; equal-width consecutive hidden layers get identity skips."""
    if d_in < 1 or d_Z < 1:
        raise ValueError(f"d_in and d_Z must be >= 1, got {d_in}, {d_Z}")
    rng = make_rng(seed)
    hidden = []
    width_in = d_in
    for w in hidden_widths:
        W = rng.standard_normal((width_in, w)) * math.sqrt(2.0 / width_in)
        hidden.append(
            HiddenLayer(W, np.ones(w), np.zeros(w), np.zeros(w), np.ones(w), residual=(w == width_in))
        )
        width_in = w
    W_out = rng.standard_normal((width_in, d_Z)) * math.sqrt(1.0 / width_in)
    return EncoderParams(hidden, W_out, np.zeros(d_Z), d_in, d_Z, seed)


@dataclass
class ForwardCache:
    owner: int
    version: int
    mode: str
    inputs: list = field(default_factory=list)  # per hidden layer: (h_in, u, y, inv_std)
    last_hidden: np.ndarray | None = None


def forward(enc: EncoderParams, X, mode: str = "train"):
    """Returns ``(Z, cache)``; train mode uses batch statistics and updates running state."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != enc.d_in:
        raise InvalidShape(f"expected (n, {enc.d_in}) input, got {X.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    n = X.shape[0]
    if mode == "train" and n < 2:
        raise InsufficientBatch("batch statistics need at least 2 rows")
    cache = ForwardCache(id(enc), enc.version, mode)
    h = X
    m = enc.momentum
    for layer in enc.hidden:
        a = h @ layer.W
        if mode == "train":
            u, y, out, mean, var, inv_std = kernels.bn_leaky_forward(
                a, layer.gamma, layer.beta, enc.alpha, BN_EPS
            )
            layer.running_mean *= 1.0 - m
            layer.running_mean += m * mean
            layer.running_var *= 1.0 - m
            layer.running_var += m * var * (n / (n - 1.0))
            cache.inputs.append((h, u, y, inv_std))
        else:
            scale = layer.gamma / np.sqrt(layer.running_var + BN_EPS)
            out = kernels.affine_leaky(a, scale, layer.beta - layer.running_mean * scale, enc.alpha)
        h = h + out if layer.residual else out
    cache.last_hidden = h
    return h @ enc.W_out + enc.b_out, cache


def backward(enc: EncoderParams, cache: ForwardCache, G) -> dict:
    """Parameter gradients of a scalar whose gradient w.r.t. the outputs is ``G``."""
    if cache.owner != id(enc) or cache.version != enc.version or cache.mode != "train":
        raise CacheMismatch("cache does not come from a train-mode forward of these parameters")
    G = np.asarray(G, dtype=float)
    grads = {"out.W": cache.last_hidden.T @ G, "out.b": G.sum(axis=0)}
    g_h = G @ enc.W_out.T
    for i in range(len(enc.hidden) - 1, -1, -1):
        layer = enc.hidden[i]
        h_in, u, y, inv_std = cache.inputs[i]
        g_a, g_gamma, g_beta = kernels.bn_leaky_backward(g_h, u, y, layer.gamma, inv_std, enc.alpha)
        grads[f"h{i}.W"] = h_in.T @ g_a
        grads[f"h{i}.gamma"] = g_gamma
        grads[f"h{i}.beta"] = g_beta
        g_in = g_a @ layer.W.T
        g_h = g_h + g_in if layer.residual else g_in
    return grads


@dataclass
class TrainerState:
    learning_rate: float = 1e-4
    batch_size: int = 1024
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(enc: EncoderParams, grads: dict, state: TrainerState, maximize: bool = True) -> None:
    """One in-place Adam update; ascends when ``maximize``."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr_t = state.learning_rate * math.sqrt(1.0 - b2**t) / (1.0 - b1**t)
    sign = 1.0 if maximize else -1.0
    for name, p in enc.parameters():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # eps scaled to the bias-corrected form m_hat / (sqrt(v_hat) + eps)
        p += sign * lr_t * m / (np.sqrt(v) + state.adam_eps * math.sqrt(1.0 - b2**t))
    enc.version += 1


def whiten_outputs(Z, epsilon: float = 0.0) -> np.ndarray:
    """Center and symmetrically whiten ``Z`` with ``(Sigma + eps I)^{-1/2}``."""
    Z = np.asarray(Z, dtype=float)
    n, d = Z.shape
    if n <= d:
        raise InsufficientSamples(f"need n > d_Z, got n={n}, d_Z={d}")
    if not np.all(np.isfinite(Z)):
        raise NonFiniteInput("latents contain NaN or inf")
    Zc = Z - Z.mean(axis=0)
    sigma = Zc.T @ Zc / (n - 1)
    lam_min = np.linalg.eigvalsh(0.5 * (sigma + sigma.T))[0]
    if lam_min < 1e-10:
        raise IllConditioned(f"latent covariance collapsed (lambda_min={lam_min:.3e})")
    return Zc @ inv_sqrt_psd(sigma + epsilon * np.eye(d))


def consistency_epsilon(n: int) -> float:
    """Ridge schedule ``0.01 * n**(-1/4)`` for a fixed dataset of ``n`` samples."""
    return 0.01 * n ** (-0.25)


@dataclass
class TrainConfig:
    steps: int = 20000
    batch_size: int = 1024
    learning_rate: float = 1e-4
    epsilon: float | str = 1e-3  # float, or "schedule" for 0.01 * n^(-1/4)
    seed: int = 0
    d_Z: int | None = None
    hidden_widths: tuple = (32, 32, 32)
    sampling: str = "online"  # or "fixed"
    dataset_size: int | None = None
    eval_every: int = 1000
    eval_samples: int = 100_000
    log_every: int = 100


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    d_Z: int = 0
    states: tuple = ()  # final (TrainerState, TrainerState); not part of the CSV

    @property
    def columns(self) -> list[str]:
        sig = [f"sigma_{k + 1}" for k in range(self.d_Z)]
        return ["step", "J_hat", *sig, "eval_R2_f", "eval_R2_fprime", "orbit_distance"]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(row.get(c, float("nan"))) for c in self.columns])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


class _Views:
    """Supplies training batches of observations for both views."""

    def __init__(self, spec, decoders, cfg: TrainConfig, rng):
        self.spec = spec
        self.decoders = decoders
        self.rng = rng
        self.cfg = cfg
        self.fixed = None
        if cfg.sampling == "fixed":
            if not cfg.dataset_size or cfg.dataset_size < 2:
                raise ValueError("fixed sampling needs dataset_size >= 2")
            S, Sp = sample_sources(spec, cfg.dataset_size, rng)
            self.fixed = self.observe(S, Sp)
            self.order = np.empty(0, dtype=np.int64)
        elif cfg.sampling != "online":
            raise ValueError(f"unknown sampling mode {cfg.sampling!r}")

    def observe(self, S, Sp):
        if self.decoders is None:
            return S, Sp
        g, gp = self.decoders
        return decode(g, S), decode(gp, Sp)

    def batch(self):
        if self.fixed is None:
            return self.observe(*sample_sources(self.spec, self.cfg.batch_size, self.rng))
        X, Xp = self.fixed
        b = min(self.cfg.batch_size, X.shape[0])
        if self.order.size < b:
            self.order = self.rng.permutation(X.shape[0])
        idx, self.order = self.order[:b], self.order[b:]
        return X[idx], Xp[idx]


def _epsilon(cfg: TrainConfig) -> float:
    if cfg.epsilon == "schedule":
        n = cfg.dataset_size if cfg.sampling == "fixed" else cfg.batch_size
        return consistency_epsilon(n)
    return float(cfg.epsilon)


def evaluate_encoders(enc, enc_p, S, Sp, X, Xp) -> dict:
    """Eval-mode R^2 per view and orbit distance to the whitened true sources."""
    Z, _ = forward(enc, X, "eval")
    Zp, _ = forward(enc_p, Xp, "eval")
    out = {"eval_R2_f": r_squared(S, Z)[1], "eval_R2_fprime": r_squared(Sp, Zp)[1]}
    if Z.shape[1] == S.shape[1]:
        try:
            out["orbit_distance"] = view_orbit_distance(whiten_outputs(Z), whiten_outputs(S)) + (
                view_orbit_distance(whiten_outputs(Zp), whiten_outputs(Sp))
            )
        except IllConditioned:
            out["orbit_distance"] = float("nan")
    return out


def train_cca(
    config: TrainConfig,
    latent_spec: LatentSpec,
    decoders: tuple[DecoderParams, DecoderParams] | None,
    eval_set=None,
    callback=None,
):
    """Maximize the empirical CCA objective over two encoders with Adam.

    ``decoders=None`` trains directly on the sources.  ``eval_set`` is an
    optional ``(S, S', X, X')`` tuple; otherwise one of ``eval_samples`` rows is
    drawn from a dedicated stream.  ``callback(step, enc, enc_prime, row)`` is
    invoked at every evaluation step and may add entries to ``row``.
    Returns ``(enc, enc_prime, history)``.
    """
    cfg = config
    d_Z = cfg.d_Z or latent_spec.d_S
    ss = np.random.SeedSequence(cfg.seed)
    s_init, s_init_p, s_data, s_eval = ss.spawn(4)
    d_in = latent_spec.d_S if decoders is None else decoders[0].d_X
    d_in_p = latent_spec.d_S if decoders is None else decoders[1].d_X
    enc = init_encoder(d_in, d_Z, cfg.hidden_widths, s_init)
    enc_p = init_encoder(d_in_p, d_Z, cfg.hidden_widths, s_init_p)
    enc.seed = enc_p.seed = cfg.seed
    st = TrainerState(cfg.learning_rate, cfg.batch_size)
    st_p = TrainerState(cfg.learning_rate, cfg.batch_size)
    history = TrainHistory(d_Z=d_Z, states=(st, st_p))
    if cfg.steps <= 0:
        return enc, enc_p, history

    views = _Views(latent_spec, decoders, cfg, make_rng(s_data))
    if cfg.eval_every and eval_set is None:
        S_ev, Sp_ev = sample_sources(latent_spec, cfg.eval_samples, make_rng(s_eval))
        eval_set = (S_ev, Sp_ev, *views.observe(S_ev, Sp_ev))
    eps = _epsilon(cfg)

    for step in range(1, cfg.steps + 1):
        X, Xp = views.batch()
        Z, cache = forward(enc, X, "train")
        Zp, cache_p = forward(enc_p, Xp, "train")
        try:
            stats = empirical_cross_stats(Z, Zp, eps)
        except (NonFiniteInput, IllConditioned, np.linalg.LinAlgError) as exc:
            raise DivergedTraining(f"step {step}: {exc}") from exc
        J = float(stats.singulars.sum())
        if not math.isfinite(J):
            raise DivergedTraining(f"step {step}: objective is not finite")
        G, Gp = cca_gradient_from_stats(stats, Z, Zp)
        adam_step(enc, backward(enc, cache, G), st)
        adam_step(enc_p, backward(enc_p, cache_p, Gp), st_p)

        log = cfg.log_every and (step % cfg.log_every == 0 or step == cfg.steps)
        ev = cfg.eval_every and (step % cfg.eval_every == 0 or step == cfg.steps)
        if log or ev:
            row = {"step": step, "J_hat": J}
            row.update({f"sigma_{k + 1}": float(s) for k, s in enumerate(stats.singulars)})
            if ev:
                row.update(evaluate_encoders(enc, enc_p, *eval_set))
                if callback is not None:
                    callback(step, enc, enc_p, row)
            history.rows.append(row)
    return enc, enc_p, history
