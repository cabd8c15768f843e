"""Cross-modal conditional GAN operating in the latent subspace.

Two generator/discriminator pairs: img->txt and txt->img. A generator maps
[source-subspace row || Gaussian noise || one-hot cluster noise] to a fake
row of the *target* subspace; its loss combines an adversarial term with a
similarity pull toward the paired real target row. A discriminator scores
[subspace row || soft-assignment row] through a dense layer, a
minibatch-discrimination block (learned projections, exp(-L1) similarity
sums across the batch), another dense layer and a sigmoid.

The adversarial generator term defaults to the non-saturating -log D(fake);
the literal printed form -log(1 - D(fake)) stays available behind
form="as_printed" for comparison.

All forward passes have matching hand-written backward passes; the test
suite checks them against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from ._kernels import mbd_backward, mbd_forward
from .errors import ValidationError
from .util import EPS, as_f64

GENERATOR_LOSS_FORMS = ("nonsaturating", "as_printed")


@dataclass(frozen=True)
class NoiseSpec:
    """Noise layout: d_gauss Gaussian coordinates followed by a K-wide one-hot."""

    d_gauss: int
    k: int

    def __post_init__(self):
        if self.d_gauss < 1:
            raise ValidationError(f"d_gauss must be >= 1, got {self.d_gauss}")
        if self.k < 2:
            raise ValidationError(f"K must be >= 2, got {self.k}")

    @property
    def total(self) -> int:
        return self.d_gauss + self.k


@dataclass(frozen=True)
class DiscSpec:
    """Discriminator shape: dense -> minibatch block -> dense -> sigmoid."""

    in_dim: int  # d_sub + K
    hidden1: int = 128
    mbd_kernels: int = 32  # B
    mbd_dim: int = 16  # C
    hidden2: int = 128
    slope: float = 0.01


@dataclass
class DiscParams:
    spec: DiscSpec
    stack1: nets.NetParams
    t: np.ndarray  # (hidden1, B, C) minibatch projection kernel
    stack2: nets.NetParams
    w_out: np.ndarray  # (hidden2, 1)
    b_out: np.ndarray  # (1,)

    def learnable(self):
        out = [("s1." + n, a) for n, a in self.stack1.learnable()]
        if self.spec.mbd_kernels > 0:
            out.append(("t", self.t))
        out += [("s2." + n, a) for n, a in self.stack2.learnable()]
        out += [("w_out", self.w_out), ("b_out", self.b_out)]
        return out

    def round_to_storage(self):
        self.stack1.round_to_storage()
        self.stack2.round_to_storage()
        self.t = self.t.astype(np.float32).astype(np.float64)
        self.w_out = self.w_out.astype(np.float32).astype(np.float64)
        self.b_out = self.b_out.astype(np.float32).astype(np.float64)


@dataclass
class GanPair:
    """One direction of the cross-modal GAN (generator + its discriminator)."""

    direction: str  # "img2txt" or "txt2img"
    noise: NoiseSpec
    gen: nets.NetParams
    disc: DiscParams

    @property
    def d_sub(self) -> int:
        return self.gen.spec.out_dim


def init_gan_pair(
    direction: str,
    d_sub: int,
    noise: NoiseSpec,
    gen_hidden: tuple,
    disc_spec: DiscSpec,
    seed: int,
) -> GanPair:
    gen_spec = nets.MLPSpec(
        layer_dims=(d_sub + noise.total, *gen_hidden, d_sub),
        batchnorm=(True,) * (len(gen_hidden) + 1),
    )
    gen = nets.init_params(gen_spec, seed)
    stack1 = nets.init_params(
        nets.MLPSpec((disc_spec.in_dim, disc_spec.hidden1), slope=disc_spec.slope), seed + 1
    )
    stack2 = nets.init_params(
        nets.MLPSpec(
            (disc_spec.hidden1 + disc_spec.mbd_kernels, disc_spec.hidden2),
            slope=disc_spec.slope,
        ),
        seed + 2,
    )
    from .util import rng_for

    rng = rng_for(seed, "disc", direction)
    b, c = disc_spec.mbd_kernels, disc_spec.mbd_dim
    t = rng.normal(scale=0.1, size=(disc_spec.hidden1, b, c)) if b > 0 else np.zeros(
        (disc_spec.hidden1, 0, max(c, 1))
    )
    limit = np.sqrt(6.0 / (disc_spec.hidden2 + 1))
    w_out = rng.uniform(-limit, limit, size=(disc_spec.hidden2, 1))
    return GanPair(
        direction=direction,
        noise=noise,
        gen=gen,
        disc=DiscParams(disc_spec, stack1, t, stack2, w_out, np.zeros(1)),
    )


def sample_noise(
    batch: int, spec: NoiseSpec, cond_labels: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Rows of [N(0, I_{d_gauss}) || onehot(cond_labels)]; deterministic per rng state."""
    cond_labels = np.asarray(cond_labels, dtype=np.int64)
    if cond_labels.shape != (batch,):
        raise ValidationError(f"cond_labels must have shape ({batch},)")
    if np.any(cond_labels < 0) or np.any(cond_labels >= spec.k):
        raise ValidationError("conditioning label out of range")
    gauss = rng.normal(size=(batch, spec.d_gauss))
    onehot = np.zeros((batch, spec.k))
    onehot[np.arange(batch), cond_labels] = 1.0
    return np.concatenate([gauss, onehot], axis=1)


def generate_with_cache(pair: GanPair, noise: np.ndarray, cond_rep: np.ndarray, train: bool = False):
    noise = as_f64(noise)
    cond_rep = as_f64(cond_rep)
    if cond_rep.shape[1] != pair.d_sub:
        raise ValidationError(
            f"conditioning width {cond_rep.shape[1]} != subspace width {pair.d_sub}"
        )
    if noise.shape[1] != pair.noise.total:
        raise ValidationError(f"noise width {noise.shape[1]} != {pair.noise.total}")
    if noise.shape[0] != cond_rep.shape[0]:
        raise ValidationError("noise and conditioning batch sizes differ")
    x = np.concatenate([cond_rep, noise], axis=1)
    return nets.forward(pair.gen, x, train=train)


def generate(pair: GanPair, noise: np.ndarray, cond_rep: np.ndarray, train: bool = False):
    """Fake target-subspace rows conditioned on the source-subspace rows."""
    fake, _ = generate_with_cache(pair, noise, cond_rep, train=train)
    return fake


def minibatch_features(batch_reps: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Append per-sample similarity features computed from learned projections.

    kernel has shape (d, B, C); feature p of sample i is
    sum_j exp(-||M_i,p - M_j,p||_1) with M = reps @ kernel (the j = i term
    contributes exp(0) = 1, so a singleton batch gets the self-only constant).
    """
    reps = as_f64(batch_reps)
    kernel = as_f64(kernel)
    if kernel.ndim != 3 or kernel.shape[0] != reps.shape[1]:
        raise ValidationError("kernel must have shape (d, B, C)")
    b_k = kernel.shape[1]
    if b_k == 0:
        return reps
    m = (reps @ kernel.reshape(reps.shape[1], -1)).reshape(reps.shape[0], b_k, kernel.shape[2])
    feats, _ = mbd_forward(m)
    return np.concatenate([reps, feats], axis=1)


def discriminate_with_cache(params: DiscParams, rep: np.ndarray, q_rows: np.ndarray, train: bool = False):
    rep = as_f64(np.atleast_2d(rep))
    q_rows = as_f64(np.atleast_2d(q_rows))
    if not np.allclose(q_rows.sum(axis=1), 1.0, atol=1e-6):
        raise ValidationError("soft-assignment rows must sum to 1 within 1e-6")
    x = np.concatenate([rep, q_rows], axis=1)
    if x.shape[1] != params.spec.in_dim:
        raise ValidationError(
            f"discriminator input width {x.shape[1]}, spec expects {params.spec.in_dim}"
        )
    h1, c1 = nets.forward(params.stack1, x, train=train)
    spec = params.spec
    if spec.mbd_kernels > 0:
        m = (h1 @ params.t.reshape(spec.hidden1, -1)).reshape(-1, spec.mbd_kernels, spec.mbd_dim)
        feats, expmat = mbd_forward(m)
        h1aug = np.concatenate([h1, feats], axis=1)
    else:
        m, expmat = None, None
        h1aug = h1
    h2, c2 = nets.forward(params.stack2, h1aug, train=train)
    logit = (h2 @ params.w_out + params.b_out)[:, 0]
    prob = np.clip(1.0 / (1.0 + np.exp(-logit)), EPS, 1.0 - 1e-12)
    cache = {"c1": c1, "c2": c2, "h1": h1, "h2": h2, "m": m, "expmat": expmat, "rep_dim": rep.shape[1]}
    return prob, cache


def discriminate(params_or_pair, rep: np.ndarray, q_rows: np.ndarray) -> np.ndarray:
    """Probability in (0,1) that each [rep || q] row is a real target-subspace sample."""
    params = params_or_pair.disc if isinstance(params_or_pair, GanPair) else params_or_pair
    prob, _ = discriminate_with_cache(params, rep, q_rows)
    return prob


def discriminator_backward(params: DiscParams, cache: dict, dlogit: np.ndarray):
    """Backprop dL/dlogit through the discriminator.

    Returns (d_rep, grads_dict) where grads_dict maps the names from
    DiscParams.learnable() to gradient arrays.
    """
    spec = params.spec
    dlogit = as_f64(dlogit).reshape(-1, 1)
    h2 = cache["h2"]
    grads = {
        "w_out": h2.T @ dlogit,
        "b_out": dlogit.sum(axis=0),
    }
    dh2 = dlogit @ params.w_out.T
    dh1aug, g2 = nets.backward(params.stack2, cache["c2"], dh2)
    for n, g in g2.learnable(params.stack2.spec):
        grads["s2." + n] = g
    if spec.mbd_kernels > 0:
        dh1 = dh1aug[:, : spec.hidden1].copy()
        dfeats = dh1aug[:, spec.hidden1 :]
        dm = mbd_backward(cache["m"], cache["expmat"], dfeats)
        dm_flat = dm.reshape(dm.shape[0], -1)
        grads["t"] = (cache["h1"].T @ dm_flat).reshape(params.t.shape)
        dh1 += dm_flat @ params.t.reshape(spec.hidden1, -1).T
    else:
        dh1 = dh1aug
    dx, g1 = nets.backward(params.stack1, cache["c1"], dh1)
    for n, g in g1.learnable(params.stack1.spec):
        grads["s1." + n] = g
    return dx[:, : cache["rep_dim"]], grads


def generator_loss(
    disc_out_fake: np.ndarray,
    fake: np.ndarray,
    real_target: np.ndarray,
    mu: float,
    form: str = "nonsaturating",
) -> float:
    """Adversarial term plus mu * mean squared Frobenius distance to the paired target."""
    d = as_f64(disc_out_fake)
    fake = as_f64(fake)
    real_target = as_f64(real_target)
    if fake.shape != real_target.shape:
        raise ValidationError(f"shape mismatch {fake.shape} vs {real_target.shape}")
    if mu < 0:
        raise ValidationError(f"mu must be >= 0, got {mu}")
    if form not in GENERATOR_LOSS_FORMS:
        raise ValidationError(f"unknown generator loss form {form!r}")
    if form == "nonsaturating":
        adv = -float(np.mean(np.log(np.maximum(d, EPS))))
    else:
        adv = -float(np.mean(np.log(np.maximum(1.0 - d, EPS))))
    sim = float(np.sum((fake - real_target) ** 2)) / fake.shape[0]
    return adv + mu * sim


def generator_loss_grads(
    disc_out_fake: np.ndarray,
    fake: np.ndarray,
    real_target: np.ndarray,
    mu: float,
    form: str = "nonsaturating",
):
    """(dL/dlogit_fake, similarity part of dL/dfake).

    The adversarial gradient is expressed w.r.t. the discriminator logit
    (numerically stable); the caller chains it through the discriminator to
    reach the fake rows and adds the similarity part.
    """
    d = as_f64(disc_out_fake)
    b = d.shape[0]
    if form == "nonsaturating":
        dlogit = -(1.0 - d) / b
    else:
        dlogit = d / b
    dfake_sim = 2.0 * mu * (as_f64(fake) - as_f64(real_target)) / b
    return dlogit, dfake_sim


def discriminator_loss(disc_real: np.ndarray, disc_fake: np.ndarray) -> float:
    """-[mean log D(real) + mean log(1 - D(fake))]; >= 0, minimized by perfect separation."""
    dr = as_f64(disc_real)
    df = as_f64(disc_fake)
    return -float(
        np.mean(np.log(np.maximum(dr, EPS))) + np.mean(np.log(np.maximum(1.0 - df, EPS)))
    )


def discriminator_loss_grads(disc_real: np.ndarray, disc_fake: np.ndarray):
    """(dL/dlogit_real, dL/dlogit_fake) for the negated real/fake log loss."""
    dr = as_f64(disc_real)
    df = as_f64(disc_fake)
    return -(1.0 - dr) / dr.shape[0], df / df.shape[0]
