"""Soft cluster assignment, target sharpening, KL losses and k-means.

The soft assignment uses a Student-t kernel around learnable centroids:

    q_nk = (1 + ||z_n - mu_k||^2 / dof)^(-(dof+1)/2)   normalized over k

and the sharpened target emphasizes confident rows while normalizing away
cluster frequency:

    p_nk = (q_nk^2 / f_k) / sum_k' (q_nk'^2 / f_k'),   f_k = sum_n q_nk.

KL terms keep an epsilon floor (1e-12) inside every log so losses stay
finite; a cluster whose soft frequency hits exactly zero raises
ClusterCollapseError instead, because the target distribution stops being
defined and the trainer has to surface that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import assign_min_sqdist, pairwise_sqdist
from .errors import ClusterCollapseError, ValidationError
from .util import EPS, as_f64, rng_for


@dataclass
class AssignMatrix:
    """Row-stochastic (n, K) matrix; kind is 'soft' (Q) or 'target' (P)."""

    q: np.ndarray
    kind: str = "soft"

    def __post_init__(self):
        self.q = as_f64(self.q)
        if self.q.ndim != 2:
            raise ValidationError("assignment matrix must be 2-D")
        if np.any(self.q < 0):
            raise ValidationError("assignment entries must be >= 0")
        if not np.allclose(self.q.sum(axis=1), 1.0, atol=1e-6):
            raise ValidationError("assignment rows must sum to 1 within 1e-6")


@dataclass
class Centroids:
    """(K, d) cluster centers for one modality (1 = image, 2 = text, 3 = fused)."""

    mu: np.ndarray
    modality: int = 3
    dof: float = 1.0

    def __post_init__(self):
        self.mu = as_f64(self.mu)
        if self.mu.ndim != 2:
            raise ValidationError("centroids must be a (K, d) matrix")
        if self.dof <= 0:
            raise ValidationError(f"dof must be positive, got {self.dof}")
        d2 = pairwise_sqdist(self.mu, self.mu)
        np.fill_diagonal(d2, np.inf)
        if np.min(d2) <= 0.0:
            raise ValidationError("centroid rows must be pairwise distinct")

    @property
    def k(self) -> int:
        return self.mu.shape[0]


def soft_assign_with_cache(z: np.ndarray, centroids: Centroids):
    z = as_f64(z)
    mu, dof = centroids.mu, centroids.dof
    if centroids.k < 2:
        raise ValidationError("need at least 2 clusters")
    if z.shape[1] != mu.shape[1]:
        raise ValidationError(f"z width {z.shape[1]} vs centroid width {mu.shape[1]}")
    t = 1.0 + pairwise_sqdist(z, mu) / dof
    u = t ** (-(dof + 1.0) / 2.0)
    total = u.sum(axis=1, keepdims=True)
    q = u / total
    cache = {"z": z, "mu": mu, "dof": dof, "t": t, "u": u, "total": total, "q": q}
    return q, cache


def soft_assign(z: np.ndarray, centroids: Centroids) -> np.ndarray:
    """Student-t soft assignment of each row of z to the centroids."""
    q, _ = soft_assign_with_cache(z, centroids)
    return q


def soft_assign_backward(cache: dict, dq: np.ndarray):
    """Chain dL/dQ back to (dL/dz, dL/dmu)."""
    z, mu, dof = cache["z"], cache["mu"], cache["dof"]
    u, t, total, q = cache["u"], cache["t"], cache["total"], cache["q"]
    dq = as_f64(dq)
    du = (dq - np.sum(dq * q, axis=1, keepdims=True)) / total
    ds = du * (-(dof + 1.0) / (2.0 * dof)) * t ** (-(dof + 3.0) / 2.0)
    dz = 2.0 * (ds.sum(axis=1, keepdims=True) * z - ds @ mu)
    dmu = 2.0 * (ds.sum(axis=0)[:, None] * mu - ds.T @ z)
    return dz, dmu


def target_distribution(q: np.ndarray) -> np.ndarray:
    """Sharpened, frequency-normalized target; constant w.r.t. gradients."""
    q = as_f64(q)
    f = q.sum(axis=0)
    if np.any(f <= 0.0):
        raise ClusterCollapseError(int(np.argmax(f <= 0.0)), "target distribution")
    w = q * q / f
    return w / w.sum(axis=1, keepdims=True)


def kl_div(p: np.ndarray, q: np.ndarray) -> float:
    """sum_n sum_k p log(p / q), zero-mass rows of p contribute nothing."""
    p, q = as_f64(p), as_f64(q)
    if p.shape != q.shape:
        raise ValidationError(f"shape mismatch {p.shape} vs {q.shape}")
    ratio = np.log(np.maximum(p, EPS)) - np.log(np.maximum(q, EPS))
    return float(np.sum(np.where(p > 0, p * ratio, 0.0)))


def kl_grad_q(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return -as_f64(p) / np.maximum(as_f64(q), EPS)


def encoder_loss(
    q_m: np.ndarray, p_m: np.ndarray, q_fus: np.ndarray, p_fus: np.ndarray, alpha: float
) -> float:
    """KL(P_m || Q_m) + alpha * KL(P_fus || Q_fus)."""
    if alpha < 0:
        raise ValidationError(f"alpha must be >= 0, got {alpha}")
    loss = kl_div(p_m, q_m)
    if alpha > 0:
        loss += alpha * kl_div(p_fus, q_fus)
    return loss


def encoder_loss_grads(q_m, p_m, q_fus, p_fus, alpha: float):
    """(dL/dQ_m, dL/dQ_fus) with the targets held constant."""
    dq_m = kl_grad_q(p_m, q_m)
    dq_fus = alpha * kl_grad_q(p_fus, q_fus) if alpha > 0 else np.zeros_like(as_f64(q_fus))
    return dq_m, dq_fus


def hard_assign(q) -> np.ndarray:
    """Argmax per row; ties break toward the lowest index."""
    arr = q.q if isinstance(q, AssignMatrix) else as_f64(q)
    return np.argmax(arr, axis=1).astype(np.int64)


def _kmeanspp_init(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = z.shape[0]
    centers = np.empty((k, z.shape[1]))
    centers[0] = z[rng.integers(n)]
    d2 = pairwise_sqdist(z, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = z[idx]
        d2 = np.minimum(d2, pairwise_sqdist(z, centers[j : j + 1])[:, 0])
    return centers


def lloyd(z: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    """Lloyd iterations to label convergence, reseeding empty clusters at the
    point farthest from its current centroid. Returns (centers, labels, wcss)."""
    z = as_f64(z)
    centers = as_f64(centers).copy()
    k = centers.shape[0]
    labels = np.full(z.shape[0], -1, dtype=np.int64)
    for _ in range(max_iter):
        new_labels, d2 = assign_min_sqdist(z, centers)
        counts = np.bincount(new_labels, minlength=k)
        while np.any(counts == 0):
            empty = int(np.argmax(counts == 0))
            far = int(np.argmax(d2))
            centers[empty] = z[far]
            new_labels, d2 = assign_min_sqdist(z, centers)
            counts = np.bincount(new_labels, minlength=k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, z)
        centers = sums / counts[:, None]
    labels, d2 = assign_min_sqdist(z, centers)
    return centers, labels, float(d2.sum())


def kmeans(
    z: np.ndarray,
    k: int,
    restarts: int = 20,
    seed: int = 0,
    modality: int = 3,
    dof: float = 1.0,
):
    """k-means++ with multiple restarts; returns the lowest-WCSS run.

    Deterministic per seed: restart r uses its own stream derived from
    (seed, 'kmeans', r), so parallel execution would select the same result.
    """
    z = as_f64(z)
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if z.shape[0] < k:
        raise ValidationError(f"need at least k={k} rows, got {z.shape[0]}")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        rng = rng_for(seed, "kmeans", r)
        centers = _kmeanspp_init(z, k, rng)
        centers, labels, wcss = lloyd(z, centers)
        if best is None or wcss < best[2]:
            best = (centers, labels, wcss)
    centers, labels, _ = best
    return Centroids(centers, modality=modality, dof=dof), labels
