"""Two-modality datasets with per-instance presence information.

A dataset is two dense feature tables (image-side and text-side), a presence
mask saying which modality each instance actually has, and optional integer
labels. Rows of an absent modality are stored as zeros purely as a
placeholder: the mask is authoritative and nothing downstream may read those
rows as data (the zero-imputation baseline is the one deliberate exception).

On-disk layout of a dataset directory:
    manifest.json   keys: n, K, d_img, d_txt, has_labels, missing_rate, seed
    img.f32         row-major little-endian float32, no header
    txt.f32         row-major little-endian float32, no header
    mask.u8         n bytes; bit0 = has_img, bit1 = has_txt
    labels.i64      optional, n little-endian int64
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .util import rng_for

MANIFEST_KEYS = ("n", "K", "d_img", "d_txt", "has_labels", "missing_rate", "seed")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class FeatureTable:
    """Dense (n, dim) float32 feature matrix for one modality."""

    data: np.ndarray
    dim: int

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValidationError("feature table must be 2-D")
        if self.dim <= 0 or self.data.shape[1] != self.dim:
            raise ValidationError(
                f"declared dim {self.dim} does not match table width {self.data.shape[1]}"
            )
        if not np.all(np.isfinite(self.data)):
            r, c = np.argwhere(~np.isfinite(self.data))[0]
            raise FormatError(f"non-finite feature value at row {r}, column {c}")

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass
class PresenceMask:
    """Per-instance booleans (has_img, has_txt) plus the missing rate that produced them."""

    has_img: np.ndarray
    has_txt: np.ndarray
    missing_rate: float

    def __post_init__(self):
        self.has_img = np.ascontiguousarray(self.has_img, dtype=bool)
        self.has_txt = np.ascontiguousarray(self.has_txt, dtype=bool)
        if self.has_img.shape != self.has_txt.shape or self.has_img.ndim != 1:
            raise ValidationError("mask flag vectors must be 1-D and equal length")
        if np.any(~self.has_img & ~self.has_txt):
            bad = int(np.argwhere(~self.has_img & ~self.has_txt)[0])
            raise ValidationError(f"instance {bad} has neither modality")
        if not (0.0 <= self.missing_rate < 1.0):
            raise ValidationError(f"missing_rate {self.missing_rate} outside [0, 1)")

    @property
    def n(self) -> int:
        return self.has_img.shape[0]

    @property
    def complete(self) -> np.ndarray:
        return self.has_img & self.has_txt

    def counts(self) -> tuple[int, int, int]:
        """(complete, image-only, text-only) instance counts."""
        comp = int(np.sum(self.complete))
        img_only = int(np.sum(self.has_img & ~self.has_txt))
        txt_only = int(np.sum(~self.has_img & self.has_txt))
        return comp, img_only, txt_only


@dataclass
class IncompleteDataset:
    img: FeatureTable
    txt: FeatureTable
    mask: PresenceMask
    labels: np.ndarray | None = None
    K: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.img.n != self.txt.n or self.img.n != self.mask.n:
            raise ValidationError(
                f"row counts disagree: img {self.img.n}, txt {self.txt.n}, mask {self.mask.n}"
            )
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.img.n,):
                raise ValidationError("labels length must equal the instance count")
            if np.unique(self.labels).size < 2:
                raise ValidationError("labels must cover at least 2 distinct values")

    @property
    def n(self) -> int:
        return self.img.n

    def equals(self, other: "IncompleteDataset") -> bool:
        same_labels = (self.labels is None) == (other.labels is None) and (
            self.labels is None or np.array_equal(self.labels, other.labels)
        )
        return (
            np.array_equal(self.img.data, other.img.data)
            and np.array_equal(self.txt.data, other.txt.data)
            and np.array_equal(self.mask.has_img, other.mask.has_img)
            and np.array_equal(self.mask.has_txt, other.mask.has_txt)
            and self.mask.missing_rate == other.mask.missing_rate
            and self.K == other.K
            and same_labels
        )


def make_missing_mask(n: int, p: float, split_ratio: float = 0.5, seed: int = 0) -> PresenceMask:
    """Presence mask with exactly round(n*(1-p)) complete instances.

    Of the incomplete instances, a split_ratio fraction (rounded half up) keep
    only the image modality; the rest keep only text. Deterministic per seed.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not (0.0 <= p < 1.0):
        raise ValidationError(f"missing rate p={p} outside [0, 1)")
    if not (0.0 <= split_ratio <= 1.0):
        raise ValidationError(f"split_ratio {split_ratio} outside [0, 1]")
    m = _round_half_up(n * (1.0 - p))
    if m < 1:
        raise ValidationError(f"no complete instances left (n={n}, p={p})")
    n_inc = n - m
    n_img_only = _round_half_up(n_inc * split_ratio)

    perm = rng_for(seed, "mask").permutation(n)
    has_img = np.zeros(n, dtype=bool)
    has_txt = np.zeros(n, dtype=bool)
    has_img[perm[: m + n_img_only]] = True
    has_txt[perm[:m]] = True
    has_txt[perm[m + n_img_only :]] = True
    return PresenceMask(has_img, has_txt, missing_rate=p)


def apply_mask(ds: IncompleteDataset, mask: PresenceMask) -> IncompleteDataset:
    """Zero-fill the absent modality rows of a fully present dataset (pure)."""
    if mask.n != ds.n:
        raise ValidationError(f"mask length {mask.n} does not match dataset n {ds.n}")
    if not np.all(ds.mask.complete):
        raise ValidationError("apply_mask expects a fully present dataset")
    img = ds.img.data.copy()
    txt = ds.txt.data.copy()
    img[~mask.has_img] = 0.0
    txt[~mask.has_txt] = 0.0
    return IncompleteDataset(
        img=FeatureTable(img, ds.img.dim),
        txt=FeatureTable(txt, ds.txt.dim),
        mask=PresenceMask(mask.has_img.copy(), mask.has_txt.copy(), mask.missing_rate),
        labels=None if ds.labels is None else ds.labels.copy(),
        K=ds.K,
        seed=ds.seed,
    )


def synth_paired_blobs(
    K: int, n: int, d_img: int, d_txt: int, sigma: float, seed: int
) -> IncompleteDataset:
    """Paired blob dataset: one latent cluster structure seen through two modalities.

    Latent points sit exactly on K well-separated cluster centers (pairwise
    distance >= 10*sigma); each modality is a fixed random orthonormal affine
    map of the latent point plus N(0, sigma^2) noise, so the two modalities are
    information-equivalent views and either one supports clustering on its own.
    """
    if K < 2:
        raise ValidationError(f"K must be >= 2, got {K}")
    if n < 4 * K:
        raise ValidationError(f"n must be >= 4*K, got n={n}, K={K}")
    if sigma <= 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    if d_img < 2 or d_txt < 2:
        raise ValidationError("feature dimensions must be >= 2")

    d_lat = max(2, min(K, d_img, d_txt))
    rng = rng_for(seed, "synth")
    centers = rng.normal(size=(K, d_lat))
    gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    dmin = gaps[~np.eye(K, dtype=bool)].min()
    centers *= max(20.0 * sigma, 1.0) / dmin

    labels = rng.integers(0, K, size=n)
    latent = centers[labels]

    tables = []
    for d_m, tag in ((d_img, "map_img"), (d_txt, "map_txt")):
        map_rng = rng_for(seed, "synth", tag)
        q, _ = np.linalg.qr(map_rng.normal(size=(d_m, d_lat)))
        offset = map_rng.normal(size=d_m)
        x = latent @ q.T + offset + sigma * map_rng.normal(size=(n, d_m))
        tables.append(FeatureTable(x.astype(np.float32), d_m))

    mask = PresenceMask(np.ones(n, dtype=bool), np.ones(n, dtype=bool), missing_rate=0.0)
    return IncompleteDataset(tables[0], tables[1], mask, labels=labels, K=K, seed=seed)


def write_dataset(ds: IncompleteDataset, dir_path) -> Path:
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n": ds.n,
        "K": ds.K,
        "d_img": ds.img.dim,
        "d_txt": ds.txt.dim,
        "has_labels": ds.labels is not None,
        "missing_rate": ds.mask.missing_rate,
        "seed": ds.seed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (out / "img.f32").write_bytes(ds.img.data.astype("<f4").tobytes())
    (out / "txt.f32").write_bytes(ds.txt.data.astype("<f4").tobytes())
    mask_bytes = (ds.mask.has_img.astype(np.uint8) | (ds.mask.has_txt.astype(np.uint8) << 1))
    (out / "mask.u8").write_bytes(mask_bytes.tobytes())
    if ds.labels is not None:
        (out / "labels.i64").write_bytes(ds.labels.astype("<i8").tobytes())
    return out


def _read_matrix(path: Path, n: int, d: int, name: str) -> np.ndarray:
    raw = path.read_bytes()
    count = len(raw) // 4
    if len(raw) % 4 != 0 or count != n * d:
        raise FormatError(
            f"{name} holds {count} float32 values, manifest requires n*{name[:-4]}_dim = {n}*{d} = {n * d}"
        )
    mat = np.frombuffer(raw, dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(mat)):
        r, c = np.argwhere(~np.isfinite(mat))[0]
        raise FormatError(f"non-finite value in {name} at row {r}, column {c}")
    return mat.copy()


def read_dataset(manifest_path) -> IncompleteDataset:
    """Load a dataset directory (path may be the directory or its manifest.json)."""
    path = Path(manifest_path)
    root = path.parent if path.name == "manifest.json" else path
    mf_file = root / "manifest.json"
    if not mf_file.exists():
        raise FormatError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(mf_file.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"malformed manifest.json: {e}") from e
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise FormatError(f"manifest.json missing keys: {missing}")

    n, d_img, d_txt = manifest["n"], manifest["d_img"], manifest["d_txt"]
    img = _read_matrix(root / "img.f32", n, d_img, "img.f32")
    txt = _read_matrix(root / "txt.f32", n, d_txt, "txt.f32")

    mask_raw = np.frombuffer((root / "mask.u8").read_bytes(), dtype=np.uint8)
    if mask_raw.shape[0] != n:
        raise FormatError(f"mask.u8 holds {mask_raw.shape[0]} bytes, expected n = {n}")
    mask = PresenceMask(
        (mask_raw & 1).astype(bool),
        ((mask_raw >> 1) & 1).astype(bool),
        missing_rate=float(manifest["missing_rate"]),
    )

    labels = None
    if manifest["has_labels"]:
        lab_file = root / "labels.i64"
        if not lab_file.exists():
            raise FormatError("manifest declares labels but labels.i64 is missing")
        labels = np.frombuffer(lab_file.read_bytes(), dtype="<i8")
        if labels.shape[0] != n:
            raise FormatError(f"labels.i64 holds {labels.shape[0]} entries, expected n = {n}")
        labels = labels.copy()

    return IncompleteDataset(
        FeatureTable(img, d_img),
        FeatureTable(txt, d_txt),
        mask,
        labels=labels,
        K=manifest["K"],
        seed=manifest["seed"],
    )


def remask(ds: IncompleteDataset, mask: PresenceMask) -> IncompleteDataset:
    """apply_mask for datasets that may already carry missing rows.

    Only legal when the new mask hides a superset of what is already hidden,
    since hidden rows cannot be resurrected from the zero sentinel.
    """
    if np.all(ds.mask.complete):
        return apply_mask(ds, mask)
    if np.any(mask.has_img & ~ds.mask.has_img) or np.any(mask.has_txt & ~ds.mask.has_txt):
        raise ValidationError("new mask would unhide rows that are already zero-filled")
    img = ds.img.data.copy()
    txt = ds.txt.data.copy()
    img[~mask.has_img] = 0.0
    txt[~mask.has_txt] = 0.0
    return IncompleteDataset(
        img=FeatureTable(img, ds.img.dim),
        txt=FeatureTable(txt, ds.txt.dim),
        mask=PresenceMask(mask.has_img.copy(), mask.has_txt.copy(), mask.missing_rate),
        labels=None if ds.labels is None else ds.labels.copy(),
        K=ds.K,
        seed=ds.seed,
    )
