"""Central finite-difference oracles shared by the gradient tests."""
import numpy as np

from nlcca.cca import cca_gradient, cca_objective, empirical_cross_stats
from nlcca.encoder import backward, forward, init_encoder
from nlcca.latent import make_rng


def rel_err(numeric, analytic) -> float:
    """Norm-wise relative error ``max|fd - g| / max|g|``."""
    numeric = np.asarray(numeric, dtype=float)
    analytic = np.asarray(analytic, dtype=float)
    return float(np.max(np.abs(numeric - analytic)) / max(np.max(np.abs(analytic)), 1e-300))


def objective(Z, Zp, eps):
    return cca_objective(empirical_cross_stats(Z, Zp, eps))


def loss_level_error(seed, n=64, d=4, eps=1e-2, h=1e-5) -> float:
    """FD check of the objective gradient w.r.t. both raw output matrices."""
    rng = make_rng(seed)
    Z = rng.standard_normal((n, d))
    Zp = 0.6 * Z @ rng.standard_normal((d, d)) + rng.standard_normal((n, d))
    G, Gp = cca_gradient(Z, Zp, eps)
    fd = np.zeros_like(Z)
    fdp = np.zeros_like(Zp)
    for M, out, first in ((Z, fd, True), (Zp, fdp, False)):
        for idx in np.ndindex(*M.shape):
            old = M[idx]
            M[idx] = old + h
            up = objective(Z, Zp, eps)
            M[idx] = old - h
            dn = objective(Z, Zp, eps)
            M[idx] = old
            out[idx] = (up - dn) / (2 * h)
    return max(rel_err(fd, G), rel_err(fdp, Gp))


def _pipeline_J(enc, enc_p, X, Xp, eps):
    Z, _ = forward(enc, X, "train")
    Zp, _ = forward(enc_p, Xp, "train")
    return objective(Z, Zp, eps)


def end_to_end_error(seed, n=32, d_in=4, d_Z=3, widths=(8, 8), eps=1e-2, n_params=50, h=1e-6) -> float:
    """FD check of encoder-parameter gradients through the CCA loss.

    Running statistics are mutated by every train-mode forward but never feed
    the train-mode output, so perturbed forwards leave the loss unaffected.
    """
    rng = make_rng(seed)
    X = rng.standard_normal((n, d_in))
    Xp = X @ rng.standard_normal((d_in, d_in)) * 0.5 + rng.standard_normal((n, d_in))
    enc = init_encoder(d_in, d_Z, widths, seed=(seed, 1))
    enc_p = init_encoder(d_in, d_Z, widths, seed=(seed, 2))
    Z, cache = forward(enc, X, "train")
    Zp, cache_p = forward(enc_p, Xp, "train")
    G, Gp = cca_gradient(Z, Zp, eps)
    grads = backward(enc, cache, G)
    grads_p = backward(enc_p, cache_p, Gp)
    slots = []
    for which, e, g in ((0, enc, grads), (1, enc_p, grads_p)):
        for name, p in e.parameters():
            for idx in np.ndindex(*p.shape):
                slots.append((p, idx, g[name][idx]))
    pick = rng.choice(len(slots), size=min(n_params, len(slots)), replace=False)
    analytic, numeric = [], []
    for k in pick:
        p, idx, g = slots[k]
        old = p[idx]
        p[idx] = old + h
        up = _pipeline_J(enc, enc_p, X, Xp, eps)
        p[idx] = old - h
        dn = _pipeline_J(enc, enc_p, X, Xp, eps)
        p[idx] = old
        analytic.append(g)
        numeric.append((up - dn) / (2 * h))
    return rel_err(numeric, analytic)
