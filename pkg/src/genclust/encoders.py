"""Modality encoders and the fusion rules combining real and generated rows.

`encode` is a pure matrix function: sentinel (absent) rows pass through and
produce garbage that callers must never consume. All masking semantics live
in `fuse_with_fakes`, which assembles the fused representation per instance:

    both present:  (1-beta) z_img + beta z_txt + eta_img fake_img + eta_txt fake_txt
    text absent:   (1-beta) z_img + beta fake_txt
    image absent:  (1-beta) fake_img + beta z_txt

so the generated rows act as imputation for incomplete instances and as
augmentation (eta terms) for complete ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nets
from .dataio import PresenceMask
from .errors import ValidationError
from .util import as_f64


def encode(params: nets.NetParams, x: np.ndarray) -> np.ndarray:
    """Map an (n, d_in) feature matrix to the (n, d_sub) subspace."""
    out, _ = nets.forward(params, x, train=False)
    return out


def encode_with_cache(params: nets.NetParams, x: np.ndarray):
    return nets.forward(params, x, train=False)


def fuse(z_img: np.ndarray, z_txt: np.ndarray, beta: float) -> np.ndarray:
    """Convex combination (1-beta)*z_img + beta*z_txt (rows or matrices)."""
    z_img = as_f64(z_img)
    z_txt = as_f64(z_txt)
    if z_img.shape != z_txt.shape:
        raise ValidationError(f"shape mismatch {z_img.shape} vs {z_txt.shape}")
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta {beta} outside [0, 1]")
    return (1.0 - beta) * z_img + beta * z_txt


@dataclass
class SubspaceState:
    """All per-instance subspace matrices plus per-modality centroids.

    Centroid keys: 1 = image, 2 = text, 3 = fused.
    """

    z_img: np.ndarray
    z_txt: np.ndarray
    z_fus: np.ndarray | None = None
    fake_img: np.ndarray | None = None
    fake_txt: np.ndarray | None = None
    centroids: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.z_img.shape[0]

    @property
    def d_sub(self) -> int:
        return self.z_img.shape[1]


def fuse_with_fakes(
    state: SubspaceState,
    mask: PresenceMask,
    beta: float,
    eta_img: float,
    eta_txt: float,
) -> np.ndarray:
    """Fused representation using generated rows for absent modalities.

    Eta augmentation applies only to fully present instances; an absent
    modality's real (sentinel) row is never read.
    """
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta {beta} outside [0, 1]")
    if eta_img < 0 or eta_txt < 0:
        raise ValidationError("eta weights must be >= 0")
    zi, zt = as_f64(state.z_img), as_f64(state.z_txt)
    fi = as_f64(state.fake_img) if state.fake_img is not None else np.zeros_like(zi)
    ft = as_f64(state.fake_txt) if state.fake_txt is not None else np.zeros_like(zt)
    if mask.n != zi.shape[0]:
        raise ValidationError(f"mask length {mask.n} vs state rows {zi.shape[0]}")
    if zi.shape != zt.shape or fi.shape != zi.shape or ft.shape != zi.shape:
        raise ValidationError("all subspace matrices must share one shape")

    both = mask.complete
    img_only = mask.has_img & ~mask.has_txt
    txt_only = ~mask.has_img & mask.has_txt
    if not np.all(both | img_only | txt_only):
        raise ValidationError("mask contains an instance with neither modality")

    z_fus = np.empty_like(zi)
    z_fus[both] = (
        (1.0 - beta) * zi[both]
        + beta * zt[both]
        + eta_img * fi[both]
        + eta_txt * ft[both]
    )
    z_fus[img_only] = (1.0 - beta) * zi[img_only] + beta * ft[img_only]
    z_fus[txt_only] = (1.0 - beta) * fi[txt_only] + beta * zt[txt_only]
    if not np.all(np.isfinite(z_fus)):
        raise ValidationError("fused representation is non-finite")
    return z_fus


def fuse_with_fakes_backward(
    mask: PresenceMask, beta: float, d_fus: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the fused matrix w.r.t. the real z_img / z_txt rows.

    Generated rows are constants during encoder updates, so gradient reaches
    a modality's encoder exactly where that modality is present.
    """
    d_fus = as_f64(d_fus)
    dzi = np.zeros_like(d_fus)
    dzt = np.zeros_like(d_fus)
    dzi[mask.has_img] = (1.0 - beta) * d_fus[mask.has_img]
    dzt[mask.has_txt] = beta * d_fus[mask.has_txt]
    return dzi, dzt
