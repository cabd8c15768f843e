"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled versions in `_ckern.pyx`; used whenever the
extension is unavailable or `GENCLUST_KERNELS=numpy` forces it.
"""

from __future__ import annotations

import numpy as np


def pairwise_sqdist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of x (n,d) and c (k,d) -> (n,k)."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    xx = np.einsum("ij,ij->i", x, x)[:, None]
    cc = np.einsum("ij,ij->i", c, c)[None, :]
    d2 = xx + cc - 2.0 * (x @ c.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def assign_min_sqdist(x: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per row: (labels int64, squared distance). Ties -> lowest index."""
    d2 = pairwise_sqdist(x, c)
    labels = np.argmin(d2, axis=1).astype(np.int64)
    best = d2[np.arange(d2.shape[0]), labels]
    return labels, best


def mbd_forward(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minibatch-discrimination similarity features.

    m: (b, B, C) projected batch. Returns (feats, expmat) with
    feats[i, p] = sum_j exp(-sum_c |m[i,p,c] - m[j,p,c]|)   (j includes i)
    and expmat the (b, b, B) matrix of exp(-L1) terms kept for the backward pass.
    """
    m = np.asarray(m, dtype=np.float64)
    diff = m[:, None, :, :] - m[None, :, :, :]
    expmat = np.exp(-np.abs(diff).sum(axis=3))
    feats = expmat.sum(axis=1)
    return feats, expmat


def mbd_backward(m: np.ndarray, expmat: np.ndarray, dfeats: np.ndarray) -> np.ndarray:
    """Gradient of sum(dfeats * feats) with respect to m.

    dM[q,p,c] = -sum_j sign(m[q,p,c] - m[j,p,c]) * expmat[q,j,p] * (dfeats[j,p] + dfeats[q,p])
    """
    m = np.asarray(m, dtype=np.float64)
    dfeats = np.asarray(dfeats, dtype=np.float64)
    sgn = np.sign(m[:, None, :, :] - m[None, :, :, :])
    w = expmat * (dfeats[None, :, :] + dfeats[:, None, :])
    return -np.einsum("qjpc,qjp->qpc", sgn, w)
