"""Fully connected encoder/decoder with hand-written backpropagation.

Every layer computes ``a = act(x @ W.T + b)`` with ``W`` of shape
``(out_dim, in_dim)``. The first ``n_encoder`` layers form the encoder whose
final activation is the embedding; the remaining layers form the decoder.

The enhanced (triplet) model is not a separate network: the same parameters
are evaluated on anchor, positive and negative inputs and the three branch
gradients are summed by :func:`backward`.

Checkpoint layout (all integers unsigned little-endian, floats float64 LE)::

    magic          5 bytes   b"PVEC1"
    n_layers       u32
    n_encoder      u32
    per layer:     in_dim u32, out_dim u32, activation u8 (0=tanh, 1=sigmoid),
                   weights (out_dim * in_dim, row-major), biases (out_dim)
    per layer:     adam m_W, v_W, m_b, v_b (same shapes as W and b)
    adam_step      u64

Trailing bytes are rejected.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from permvec.core_math import sigmoid
from permvec.errors import FormatError, InvalidArgumentError, InvalidStateError, ShapeMismatchError

MAGIC = b"PVEC1"
ACTIVATIONS = ("tanh", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise InvalidArgumentError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")


def autoencoder_specs(dims=(24, 16, 8)):
    """Mirror-image encoder/decoder specs; tanh everywhere but the output sigmoid.

    ``dims=(24, 16, 8)`` gives 24->16->8->16->24.
    """
    dims = tuple(dims)
    if len(dims) < 2:
        raise InvalidArgumentError("need at least input and embedding dims")
    enc = [LayerSpec(a, b, "tanh") for a, b in zip(dims[:-1], dims[1:])]
    rev = dims[::-1]
    dec = [LayerSpec(a, b, "tanh") for a, b in zip(rev[:-1], rev[1:])]
    dec[-1] = LayerSpec(dec[-1].in_dim, dec[-1].out_dim, "sigmoid")
    return enc + dec, len(enc)


@dataclass
class ModelParams:
    specs: list
    n_encoder: int
    weights: list
    biases: list
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if not self.m_w:
            self.m_w = [np.zeros_like(w) for w in self.weights]
            self.v_w = [np.zeros_like(w) for w in self.weights]
            self.m_b = [np.zeros_like(b) for b in self.biases]
            self.v_b = [np.zeros_like(b) for b in self.biases]
        if not 1 <= self.n_encoder < len(self.specs):
            raise InvalidArgumentError("n_encoder must leave at least one decoder layer")
        for s, w, b in zip(self.specs, self.weights, self.biases):
            if w.shape != (s.out_dim, s.in_dim) or b.shape != (s.out_dim,):
                raise ShapeMismatchError(f"parameters do not match {s}")

    @property
    def input_dim(self):
        return self.specs[0].in_dim

    @property
    def embedding_dim(self):
        return self.specs[self.n_encoder - 1].out_dim

    def copy(self):
        cp = lambda xs: [x.copy() for x in xs]  # noqa: E731
        return ModelParams(
            list(self.specs), self.n_encoder, cp(self.weights), cp(self.biases),
            cp(self.m_w), cp(self.v_w), cp(self.m_b), cp(self.v_b), self.step,
        )

    def arrays(self):
        """All parameter arrays, weights then biases per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init_params(rng, specs=None, n_encoder=None):
    """Glorot-uniform weights, zero biases, zeroed Adam state."""
    if specs is None:
        specs, n_encoder = autoencoder_specs()
    if n_encoder is None:
        raise InvalidArgumentError("n_encoder is required with explicit specs")
    weights, biases = [], []
    for s in specs:
        limit = np.sqrt(6.0 / (s.in_dim + s.out_dim))
        weights.append(rng.uniform(-limit, limit, size=(s.out_dim, s.in_dim)))
        biases.append(np.zeros(s.out_dim))
    return ModelParams(list(specs), n_encoder, weights, biases)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    activations: list  # per layer, (batch, out_dim)
    n_encoder: int
    token: tuple

    @property
    def embedding(self):
        return self.activations[self.n_encoder - 1]

    @property
    def reconstruction(self):
        return self.activations[-1]


def _token(params):
    # identifies the parameter state a trace was computed with
    return (id(params), params.step, tuple(id(w) for w in params.weights))


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise InvalidArgumentError(f"expected inputs of length {params.input_dim}, got shape {x.shape}")
    return x


def _apply(spec, z):
    return np.tanh(z) if spec.activation == "tanh" else sigmoid(z)


def forward(params, x):
    """Run the full autoencoder on a batch ``(n, D)`` (or a single vector)."""
    x = _as_batch(params, x)
    acts = []
    h = x
    for s, w, b in zip(params.specs, params.weights, params.biases):
        h = _apply(s, h @ w.T + b)
        acts.append(h)
    return ForwardTrace(x, acts, params.n_encoder, _token(params))


def encode(params, x):
    x_arr = np.asarray(x)
    h = _as_batch(params, x)
    for s, w, b in zip(params.specs[: params.n_encoder], params.weights, params.biases):
        h = _apply(s, h @ w.T + b)
    return h[0] if x_arr.ndim == 1 else h


@dataclass
class Gradients:
    weights: list
    biases: list

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def backward(params, traces, loss_grads):
    """Backpropagate upstream gradients through one or more branches.

    ``loss_grads[k]`` is ``(d_recon, d_embed)`` for ``traces[k]``: gradients
    of the scalar loss with respect to that branch's reconstruction and
    embedding. Either entry may be ``None``. Branch gradients are summed,
    which is what shared weights require.
    """
    if len(traces) != len(loss_grads):
        raise InvalidArgumentError("one (d_recon, d_embed) pair is needed per trace")
    token = _token(params)
    gw = [np.zeros_like(w) for w in params.weights]
    gb = [np.zeros_like(b) for b in params.biases]
    n_layers = len(params.specs)
    for trace, (d_recon, d_embed) in zip(traces, loss_grads):
        if trace.token != token:
            raise InvalidStateError("trace was not produced by these parameters")
        acts = trace.activations
        delta = np.zeros_like(acts[-1]) if d_recon is None else np.asarray(d_recon, dtype=np.float64)
        if delta.shape != acts[-1].shape:
            raise InvalidArgumentError("reconstruction gradient has the wrong shape")
        for layer in range(n_layers - 1, -1, -1):
            a = acts[layer]
            if layer == params.n_encoder - 1 and d_embed is not None:
                d_embed = np.asarray(d_embed, dtype=np.float64)
                if d_embed.shape != a.shape:
                    raise InvalidArgumentError("embedding gradient has the wrong shape")
                delta = delta + d_embed
            if params.specs[layer].activation == "tanh":
                dz = delta * (1.0 - a * a)
            else:
                dz = delta * a * (1.0 - a)
            a_in = acts[layer - 1] if layer else trace.inputs
            gw[layer] += dz.T @ a_in
            gb[layer] += dz.sum(axis=0)
            delta = dz @ params.weights[layer]
    return Gradients(gw, gb)


_ACT_TAG = {"tanh": 0, "sigmoid": 1}
_TAG_ACT = {v: k for k, v in _ACT_TAG.items()}


def save_checkpoint(params, path):
    parts = [MAGIC, struct.pack("<II", len(params.specs), params.n_encoder)]
    for s, w, b in zip(params.specs, params.weights, params.biases):
        parts.append(struct.pack("<IIB", s.in_dim, s.out_dim, _ACT_TAG[s.activation]))
        parts.append(w.astype("<f8").tobytes())
        parts.append(b.astype("<f8").tobytes())
    for arrs in zip(params.m_w, params.v_w, params.m_b, params.v_b):
        for a in arrs:
            parts.append(a.astype("<f8").tobytes())
    parts.append(struct.pack("<Q", params.step))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: truncated checkpoint", field=what)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def floats(self, shape, what):
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n, what), dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path, expected_specs=None):
    """Read a checkpoint; optionally verify it was built for ``expected_specs``."""
    data = Path(path).read_bytes()
    r = _Reader(data, path)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError(f"{path}: bad magic or unsupported version", field="magic")
    n_layers, n_encoder = r.unpack("<II", "layer_count")
    if n_layers < 2 or not 1 <= n_encoder < n_layers:
        raise FormatError(f"{path}: invalid layer counts {n_layers}/{n_encoder}", field="layer_count")
    specs, weights, biases = [], [], []
    for i in range(n_layers):
        in_dim, out_dim, tag = r.unpack("<IIB", f"layer[{i}].header")
        if tag not in _TAG_ACT or in_dim < 1 or out_dim < 1:
            raise FormatError(f"{path}: bad layer header", field=f"layer[{i}].header")
        specs.append(LayerSpec(in_dim, out_dim, _TAG_ACT[tag]))
        weights.append(r.floats((out_dim, in_dim), f"layer[{i}].weights"))
        biases.append(r.floats((out_dim,), f"layer[{i}].biases"))
    moments = [[], [], [], []]
    for i, s in enumerate(specs):
        for k, shape in enumerate([(s.out_dim, s.in_dim), (s.out_dim, s.in_dim), (s.out_dim,), (s.out_dim,)]):
            moments[k].append(r.floats(shape, f"layer[{i}].adam"))
    (step,) = r.unpack("<Q", "adam_step")
    if r.pos != len(data):
        raise FormatError(f"{path}: trailing bytes", field="eof")
    for i, s in enumerate(specs):
        if s.in_dim != (specs[i - 1].out_dim if i else s.in_dim):
            raise FormatError(f"{path}: layer {i} input does not match previous output", field=f"layer[{i}].header")
    if expected_specs is not None and list(expected_specs) != specs:
        raise ShapeMismatchError(f"{path}: checkpoint layers {specs} differ from expected {list(expected_specs)}")
    params = ModelParams(specs, n_encoder, weights, biases, *moments, step=step)
    for a in params.arrays():
        if not np.isfinite(a).all():
            raise FormatError(f"{path}: non-finite parameter", field="weights")
    return params
