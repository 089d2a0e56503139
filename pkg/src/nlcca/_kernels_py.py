"""Pure-numpy reference kernels; the Cython module ``_kernels`` mirrors these signatures."""
import numpy as np


def bn_leaky_forward(a, gamma, beta, alpha, eps):
    """Batch-normalize columns of ``a`` then apply the leaky activation.

    Returns ``(u, y, out, mean, var, inv_std)`` where ``u`` is the normalized
    input, ``y = gamma * u + beta`` and ``var`` the biased batch variance.
    """
    mean = a.mean(axis=0)
    centered = a - mean
    var = np.mean(centered * centered, axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    u = centered * inv_std
    y = u * gamma + beta
    out = np.where(y > 0.0, y, alpha * y)
    return u, y, out, mean, var, inv_std


def bn_leaky_backward(g_out, u, y, gamma, inv_std, alpha):
    """Backward of :func:`bn_leaky_forward` through the batch statistics.

    Returns ``(g_a, g_gamma, g_beta)``.
    """
    n = u.shape[0]
    g_y = np.where(y > 0.0, g_out, alpha * g_out)
    g_beta = g_y.sum(axis=0)
    g_gamma = (g_y * u).sum(axis=0)
    g_u = g_y * gamma
    g_a = (inv_std / n) * (n * g_u - g_u.sum(axis=0) - u * (g_u * u).sum(axis=0))
    return g_a, g_gamma, g_beta


def affine_leaky(a, scale, shift, alpha):
    y = a * scale + shift
    return np.where(y > 0.0, y, alpha * y)


def hermite_table(x, nmax):
    """Orthonormal probabilists' Hermite values ``He_k(x)/sqrt(k!)`` for ``k <= nmax``.

    Recurrence: ``h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    out = np.empty((x.size, nmax + 1))
    out[:, 0] = 1.0
    if nmax >= 1:
        out[:, 1] = x
    for k in range(1, nmax):
        out[:, k + 1] = (x * out[:, k] - np.sqrt(k) * out[:, k - 1]) / np.sqrt(k + 1)
    return out


def leaky(a, alpha):
    return np.where(a > 0.0, a, alpha * a)
