"""Dense feed-forward networks with hand-written reverse-mode gradients.

Parameters for a network live in one flat float64 array plus a (name,
shape) manifest, so checkpointing, optimizer state, and gradient checks
all operate on a single vector.  Three activations cover every network in
the package: the smooth gated unit x*sigmoid(x), the rectifier, and the
hyperbolic tangent; output layers are always linear.  The optimizer is
standard bias-corrected Adam.  Checkpoints are a one-line JSON header
followed by decimal values with 17 significant digits, which round-trips
binary64 exactly.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractViolation,
    MissingArtifactError,
    NumericError,
)

__all__ = [
    "NetSpec",
    "FlatParams",
    "AdamState",
    "init_params",
    "zero_params",
    "forward",
    "backward",
    "init_adam",
    "adam_step",
    "serialize_params",
    "deserialize_params",
    "save_checkpoint",
    "load_checkpoint",
    "CKPT_SUFFIX",
]

CKPT_SUFFIX = ".semg-ckpt"

_ALIASES = {
    "smooth-gated": "silu",
    "rectifier": "relu",
    "hyperbolic-tangent": "tanh",
}
_KNOWN = ("silu", "relu", "tanh", "identity")


@dataclass
class NetSpec:
    layer_sizes: list
    activation: str = "silu"  # hidden layers only; output is linear

    def __post_init__(self):
        self.activation = _ALIASES.get(self.activation, self.activation)

    def validate(self):
        if len(self.layer_sizes) < 2:
            raise ConfigurationError("network needs at least input and output sizes")
        if any(int(s) <= 0 for s in self.layer_sizes):
            raise ConfigurationError("layer sizes must be positive")
        if self.activation not in _KNOWN:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        return self

    def manifest(self):
        out = []
        sizes = self.layer_sizes
        for l in range(len(sizes) - 1):
            out.append((f"w{l}", (int(sizes[l + 1]), int(sizes[l]))))
            out.append((f"b{l}", (int(sizes[l + 1]),)))
        return out

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1


@dataclass
class FlatParams:
    values: np.ndarray        # flat float64
    manifest: list            # [(name, shape), ...] in storage order
    seed: int = 0

    def view(self, name):
        offset = 0
        for n, shape in self.manifest:
            size = int(np.prod(shape))
            if n == name:
                return self.values[offset:offset + size].reshape(shape)
            offset += size
        raise ContractViolation(f"no parameter named {name!r}")

    def views(self):
        out = {}
        offset = 0
        for n, shape in self.manifest:
            size = int(np.prod(shape))
            out[n] = self.values[offset:offset + size].reshape(shape)
            offset += size
        return out

    @property
    def size(self):
        return int(self.values.size)


def _manifest_size(manifest):
    return int(sum(int(np.prod(shape)) for _, shape in manifest))


def init_params(spec: NetSpec, seed: int) -> FlatParams:
    """Weights ~ N(0, 1/fan_in) drawn layer by layer, biases zero."""
    spec.validate()
    rng = np.random.default_rng(int(seed))
    manifest = spec.manifest()
    flat = np.zeros(_manifest_size(manifest))
    params = FlatParams(flat, manifest, int(seed))
    for l in range(spec.n_layers):
        w = params.view(f"w{l}")
        fan_in = w.shape[1]
        w[:] = rng.standard_normal(w.shape) / np.sqrt(fan_in)
    return params


def zero_params(spec: NetSpec) -> FlatParams:
    spec.validate()
    manifest = spec.manifest()
    return FlatParams(np.zeros(_manifest_size(manifest)), manifest, 0)


def _act(name, z):
    if name == "silu":
        return z * expit(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a):
    # a is the stored activation output for z, reused where it helps.
    if name == "silu":
        s = expit(z)
        return s * (1.0 + z * (1.0 - s))
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class _Cache:
    params: FlatParams
    acts: list   # acts[0] = input, acts[l+1] = activation output of layer l
    zs: list     # pre-activations per layer
    was_1d: bool


def forward(spec: NetSpec, params: FlatParams, x):
    """Returns (output, cache).  Accepts a single vector or a (batch, in)
    matrix; the output matches the input's dimensionality."""
    x = np.asarray(x, dtype=np.float64)
    was_1d = x.ndim == 1
    if was_1d:
        x = x[None, :]
    if x.shape[1] != spec.layer_sizes[0]:
        raise ContractViolation(
            f"input size {x.shape[1]} does not match first layer "
            f"{spec.layer_sizes[0]}"
        )
    views = params.views()
    acts = [x]
    zs = []
    a = x
    last = spec.n_layers - 1
    for l in range(spec.n_layers):
        z = a @ views[f"w{l}"].T + views[f"b{l}"]
        zs.append(z)
        a = z if l == last else _act(spec.activation, z)
        acts.append(a)
    out = acts[-1][0] if was_1d else acts[-1]
    return out, _Cache(params, acts, zs, was_1d)


def backward(spec: NetSpec, params: FlatParams, cache: _Cache, output_grad):
    """Exact gradients of sum(output * output_grad) w.r.t. every parameter.

    Returns (flat gradient array congruent with params, gradient w.r.t.
    the input).  The cache must come from a forward call on the same
    params object; anything else is a stale cache.
    """
    if cache.params is not params:
        raise ContractViolation("cache does not belong to these params")
    g = np.asarray(output_grad, dtype=np.float64)
    if cache.was_1d:
        if g.ndim != 1:
            raise ContractViolation("output_grad must be a vector for vector input")
        g = g[None, :]
    if g.shape != cache.acts[-1].shape:
        raise ContractViolation("output_grad shape mismatch")
    views = params.views()
    grads = np.zeros_like(params.values)
    gviews = FlatParams(grads, params.manifest).views()
    d = g
    for l in range(spec.n_layers - 1, -1, -1):
        np.matmul(d.T, cache.acts[l], out=gviews[f"w{l}"])
        np.sum(d, axis=0, out=gviews[f"b{l}"])
        d = d @ views[f"w{l}"]
        if l > 0:
            d = d * _act_grad(spec.activation, cache.zs[l - 1], cache.acts[l])
    input_grad = d[0] if cache.was_1d else d
    return grads, input_grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(n_params: int, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps)


def adam_step(params: FlatParams, grads, state: AdamState):
    """One bias-corrected adaptive-moment update; returns fresh
    (params', state') and never mutates the inputs."""
    g = np.asarray(grads, dtype=np.float64)
    if g.shape != params.values.shape:
        raise ContractViolation("gradient shape does not match parameters")
    if not np.all(np.isfinite(g)):
        bad = int(np.count_nonzero(~np.isfinite(g)))
        raise NumericError(f"non-finite gradient ({bad} entries) at step {state.step + 1}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2

    # Buffers are laid out by hand: one scratch array carries the second
    # moment path so a 2.4M-parameter update stays allocation-light.
    m_new = np.empty_like(g)
    np.multiply(state.m, b1, out=m_new)
    scratch = np.multiply(g, 1.0 - b1)
    m_new += scratch

    v_new = np.empty_like(g)
    np.multiply(state.v, b2, out=v_new)
    np.multiply(g, g, out=scratch)
    scratch *= 1.0 - b2
    v_new += scratch

    np.divide(v_new, 1.0 - b2**t, out=scratch)   # vhat
    np.sqrt(scratch, out=scratch)
    scratch += state.eps
    np.divide(m_new, scratch, out=scratch)        # mhat * (1-b1^t) / denom
    scratch *= state.lr / (1.0 - b1**t)
    new_values = params.values - scratch

    new_params = FlatParams(new_values, params.manifest, params.seed)
    new_state = AdamState(m_new, v_new, t, state.lr, b1, b2, state.eps)
    return new_params, new_state


_CKPT_FORMAT = "semg-ckpt"
_CKPT_VERSION = 1
_VALUES_PER_LINE = 8


def serialize_params(params: FlatParams) -> bytes:
    if not np.all(np.isfinite(params.values)):
        raise NumericError("refusing to serialize non-finite parameters")
    header = {
        "format": _CKPT_FORMAT,
        "version": _CKPT_VERSION,
        "seed": int(params.seed),
        "manifest": [[name, list(shape)] for name, shape in params.manifest],
    }
    chunks = [json.dumps(header, sort_keys=True)]
    vals = params.values
    for i in range(0, vals.size, _VALUES_PER_LINE):
        chunks.append(" ".join(f"{v:.17g}" for v in vals[i:i + _VALUES_PER_LINE]))
    return ("\n".join(chunks) + "\n").encode("utf-8")


def deserialize_params(data: bytes, expected_manifest=None) -> FlatParams:
    text = data.decode("utf-8")
    head, _, body = text.partition("\n")
    try:
        header = json.loads(head)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("format") != _CKPT_FORMAT:
        raise CheckpointError("not a parameter checkpoint")
    if header.get("version") != _CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    manifest = [(name, tuple(int(s) for s in shape)) for name, shape in header["manifest"]]
    if expected_manifest is not None:
        expected = [(name, tuple(int(s) for s in shape)) for name, shape in expected_manifest]
        if manifest != expected:
            raise CheckpointError(
                f"checkpoint shapes {manifest} do not match expected {expected}"
            )
    total = _manifest_size(manifest)
    tokens = body.split()
    if len(tokens) != total:
        raise CheckpointError(
            f"checkpoint holds {len(tokens)} values, manifest needs {total}"
        )
    values = np.array(tokens, dtype=np.float64)
    return FlatParams(values, manifest, int(header.get("seed", 0)))


def save_checkpoint(params: FlatParams, path):
    with open(path, "wb") as fh:
        fh.write(serialize_params(params))


def load_checkpoint(path, expected_manifest=None) -> FlatParams:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError as exc:
        raise MissingArtifactError(f"checkpoint not found: {path}") from exc
    return deserialize_params(data, expected_manifest)
