"""Dense networks with hand-written forward and backward passes.

Everything here operates on float64 numpy arrays. Layers are
dense -> (optional batchnorm) -> leaky rectifier; the rectifier is applied on
every layer including the last, matching the architectures this package
builds (encoders without normalization, generators with it). Backward passes
return gradients structured exactly like the parameters so the optimizer can
walk them generically, and every gradient is verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .util import as_f64

BN_EPS = 1e-5


@dataclass(frozen=True)
class MLPSpec:
    """Layer widths (input -> hidden... -> output) plus activation details."""

    layer_dims: tuple
    slope: float = 0.01
    batchnorm: tuple = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValidationError("spec needs at least input and output dims")
        if any(d <= 0 for d in dims):
            raise ValidationError(f"layer dims must be positive, got {dims}")
        if not (0.0 < self.slope < 1.0):
            raise ValidationError(f"rectifier slope {self.slope} outside (0, 1)")
        bn = tuple(bool(b) for b in self.batchnorm) or (False,) * self.n_layers
        if len(bn) != self.n_layers:
            raise ValidationError("batchnorm flags must match the layer count")
        object.__setattr__(self, "batchnorm", bn)

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]


@dataclass
class NetParams:
    """Learned parameters for one MLPSpec (weights, biases, optional norm state)."""

    spec: MLPSpec
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    run_mean: list = field(default_factory=list)
    run_var: list = field(default_factory=list)

    def learnable(self):
        """(name, array) pairs the optimizer updates, in a fixed order."""
        out = []
        for i in range(self.spec.n_layers):
            out.append((f"w{i}", self.weights[i]))
            out.append((f"b{i}", self.biases[i]))
            if self.spec.batchnorm[i]:
                out.append((f"g{i}", self.gammas[i]))
                out.append((f"beta{i}", self.betas[i]))
        return out

    def copy(self) -> "NetParams":
        return NetParams(
            spec=self.spec,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            gammas=[g.copy() if g is not None else None for g in self.gammas],
            betas=[b.copy() if b is not None else None for b in self.betas],
            run_mean=[m.copy() if m is not None else None for m in self.run_mean],
            run_var=[v.copy() if v is not None else None for v in self.run_var],
        )

    def round_to_storage(self) -> None:
        """Round every array to float32 precision in place (checkpoint parity)."""
        for group in (self.weights, self.biases, self.gammas, self.betas, self.run_mean, self.run_var):
            for i, arr in enumerate(group):
                if arr is not None:
                    group[i] = arr.astype(np.float32).astype(np.float64)


@dataclass
class Grads:
    """Gradient holder mirroring NetParams.learnable()."""

    weights: list
    biases: list
    gammas: list
    betas: list

    def learnable(self, spec: MLPSpec):
        out = []
        for i in range(spec.n_layers):
            out.append((f"w{i}", self.weights[i]))
            out.append((f"b{i}", self.biases[i]))
            if spec.batchnorm[i]:
                out.append((f"g{i}", self.gammas[i]))
                out.append((f"beta{i}", self.betas[i]))
        return out


def init_params(spec: MLPSpec, seed: int) -> NetParams:
    """Glorot-uniform weights, zero biases, identity normalization state."""
    from .util import rng_for

    rng = rng_for(seed, "init")
    params = NetParams(spec=spec)
    for i in range(spec.n_layers):
        d_in, d_out = spec.layer_dims[i], spec.layer_dims[i + 1]
        limit = np.sqrt(6.0 / (d_in + d_out))
        params.weights.append(rng.uniform(-limit, limit, size=(d_in, d_out)))
        params.biases.append(np.zeros(d_out))
        if spec.batchnorm[i]:
            params.gammas.append(np.ones(d_out))
            params.betas.append(np.zeros(d_out))
            params.run_mean.append(np.zeros(d_out))
            params.run_var.append(np.ones(d_out))
        else:
            params.gammas.append(None)
            params.betas.append(None)
            params.run_mean.append(None)
            params.run_var.append(None)
    return params


def forward(params: NetParams, x: np.ndarray, train: bool = False, bn_momentum: float = 0.1):
    """Forward pass. Returns (output, cache); cache feeds `backward`.

    In train mode batchnorm uses batch statistics and updates the running
    state; in eval mode it reads the running state and is a pure function.
    """
    spec = params.spec
    x = as_f64(x)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValidationError(
            f"input has width {x.shape[1] if x.ndim == 2 else '?'}, spec expects {spec.in_dim}"
        )
    cache = {"inputs": [], "preact": [], "xhat": [], "std": [], "mu": []}
    h = x
    for i in range(spec.n_layers):
        cache["inputs"].append(h)
        a = h @ params.weights[i] + params.biases[i]
        if spec.batchnorm[i]:
            if train:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
                params.run_mean[i] = (1 - bn_momentum) * params.run_mean[i] + bn_momentum * mu
                params.run_var[i] = (1 - bn_momentum) * params.run_var[i] + bn_momentum * var
            else:
                mu = params.run_mean[i]
                var = params.run_var[i]
            std = np.sqrt(var + BN_EPS)
            xhat = (a - mu) / std
            cache["mu"].append(mu)
            cache["std"].append(std)
            cache["xhat"].append(xhat)
            a = params.gammas[i] * xhat + params.betas[i]
        else:
            cache["mu"].append(None)
            cache["std"].append(None)
            cache["xhat"].append(None)
        cache["preact"].append(a)
        h = np.where(a > 0, a, spec.slope * a)
    cache["train"] = train
    return h, cache


def backward(params: NetParams, cache: dict, dout: np.ndarray):
    """Backward pass. Returns (dx, Grads)."""
    spec = params.spec
    train = cache["train"]
    d = as_f64(dout)
    grads = Grads(
        weights=[None] * spec.n_layers,
        biases=[None] * spec.n_layers,
        gammas=[None] * spec.n_layers,
        betas=[None] * spec.n_layers,
    )
    for i in reversed(range(spec.n_layers)):
        a = cache["preact"][i]
        d = d * np.where(a > 0, 1.0, spec.slope)
        if spec.batchnorm[i]:
            xhat = cache["xhat"][i]
            std = cache["std"][i]
            grads.gammas[i] = np.sum(d * xhat, axis=0)
            grads.betas[i] = np.sum(d, axis=0)
            dxhat = d * params.gammas[i]
            if train:
                # standard batch-statistics backward
                d = (dxhat - dxhat.mean(axis=0) - xhat * np.mean(dxhat * xhat, axis=0)) / std
            else:
                d = dxhat / std
        h_in = cache["inputs"][i]
        grads.weights[i] = h_in.T @ d
        grads.biases[i] = d.sum(axis=0)
        d = d @ params.weights[i].T
    return d, grads


def save_net(params: NetParams, path) -> None:
    """Checkpoint format: one compact JSON header line, then little-endian
    float32 blobs in layer order (w, b, and for batchnorm layers g, beta,
    running mean, running var)."""
    spec = params.spec
    header = {
        "layer_dims": list(spec.layer_dims),
        "slope": spec.slope,
        "batchnorm": list(spec.batchnorm),
    }
    blobs = []
    for i in range(spec.n_layers):
        blobs.append(params.weights[i])
        blobs.append(params.biases[i])
        if spec.batchnorm[i]:
            blobs.extend([params.gammas[i], params.betas[i], params.run_mean[i], params.run_var[i]])
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        for blob in blobs:
            f.write(np.ascontiguousarray(blob, dtype="<f4").tobytes())


def load_net(path) -> NetParams:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"checkpoint {path} has no header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
        spec = MLPSpec(
            layer_dims=tuple(header["layer_dims"]),
            slope=header["slope"],
            batchnorm=tuple(header["batchnorm"]),
        )
    except (KeyError, json.JSONDecodeError, TypeError) as e:
        raise FormatError(f"checkpoint {path} header is malformed: {e}") from e

    params = NetParams(spec=spec)
    buf = np.frombuffer(raw[nl + 1 :], dtype="<f4")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        if pos + size > buf.shape[0]:
            raise FormatError(f"checkpoint {path} truncated at offset {pos}")
        out = buf[pos : pos + size].astype(np.float64).reshape(shape)
        pos += size
        return out

    for i in range(spec.n_layers):
        d_in, d_out = spec.layer_dims[i], spec.layer_dims[i + 1]
        params.weights.append(take((d_in, d_out)))
        params.biases.append(take((d_out,)))
        if spec.batchnorm[i]:
            params.gammas.append(take((d_out,)))
            params.betas.append(take((d_out,)))
            params.run_mean.append(take((d_out,)))
            params.run_var.append(take((d_out,)))
        else:
            params.gammas.append(None)
            params.betas.append(None)
            params.run_mean.append(None)
            params.run_var.append(None)
    if pos != buf.shape[0]:
        raise FormatError(f"checkpoint {path} has {buf.shape[0] - pos} trailing floats")
    return params
