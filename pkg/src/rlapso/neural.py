"""Dense feed-forward networks with exact backpropagation.

Hidden layers use leaky ReLU (slope 0.01); the output layer is tanh or
identity.  ``forward`` accepts a single vector or a (batch, features) matrix;
``backward`` returns parameter gradients summed over the batch plus the
gradient with respect to the input, which is how the critic's action
gradient reaches the actor.

Weight files are a fixed little-endian binary layout (see ``save_weights``)
that round-trips bit-exactly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.01
WEIGHTS_MAGIC = b"RLAMW1"

_ACTIVATION_TAGS = {"tanh": 0, "identity": 1}
_TAG_ACTIVATIONS = {v: k for k, v in _ACTIVATION_TAGS.items()}


class WeightsError(Exception):
    """Base class for weight-file problems."""


class WeightsFormatError(WeightsError):
    """Bad magic bytes, unknown version, or an invalid activation tag."""


class WeightsShapeError(WeightsError):
    """Layer dimensions are invalid or do not match what the caller expects."""


class WeightsTruncatedError(WeightsError):
    """File ends before the advertised parameters are all present."""


def _leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, LEAKY_SLOPE * z)


def _leaky_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, LEAKY_SLOPE)


class GradientTape:
    """Forward-pass cache consumed by ``Mlp.backward``."""

    def __init__(self):
        self.inputs = None       # list of layer inputs, one per weight layer
        self.pre_acts = None     # list of pre-activations z_k
        self.output = None

    def reset(self):
        self.inputs = []
        self.pre_acts = []
        self.output = None


@dataclass
class Gradients:
    weights: list
    biases: list


class Mlp:
    def __init__(self, layer_dims, weights, biases, output_activation: str = "tanh"):
        if output_activation not in _ACTIVATION_TAGS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.layer_dims = list(layer_dims)
        self.weights = weights
        self.biases = biases
        self.output_activation = output_activation

    @classmethod
    def init(cls, layer_dims, output_activation: str, rng: np.random.Generator) -> "Mlp":
        """Seeded uniform(+-1/sqrt(fan_in)) initialization."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, fan_out))
        return cls(layer_dims, weights, biases, output_activation)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def clone(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
        )

    def forward(self, x, tape: GradientTape | None = None) -> np.ndarray:
        a = np.asarray(x, dtype=float)
        single = a.ndim == 1
        if single:
            a = a[None, :]
        if a.shape[1] != self.layer_dims[0]:
            raise ValueError(f"expected input width {self.layer_dims[0]}, got {a.shape[1]}")
        if tape is not None:
            tape.reset()
        last = self.n_layers - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if tape is not None:
                tape.inputs.append(a)
            z = a @ w.T + b
            if tape is not None:
                tape.pre_acts.append(z)
            if k < last:
                a = _leaky(z)
            elif self.output_activation == "tanh":
                a = np.tanh(z)
            else:
                a = z
        if tape is not None:
            tape.output = a
        return a[0] if single else a

    def backward(self, tape: GradientTape, output_grad) -> tuple[Gradients, np.ndarray]:
        """Backpropagate ``output_grad`` through the cached forward pass.

        Returns parameter gradients (summed over the batch) and the gradient
        with respect to the network input, shaped like the forward input.
        """
        if tape is None or tape.output is None:
            raise RuntimeError("backward requires a forward pass recorded on the tape")
        g = np.asarray(output_grad, dtype=float)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        if g.shape != tape.output.shape:
            raise ValueError(f"output_grad shape {g.shape} != output shape {tape.output.shape}")
        grad_w = [None] * self.n_layers
        grad_b = [None] * self.n_layers
        upstream = g
        for k in range(self.n_layers - 1, -1, -1):
            if k == self.n_layers - 1:
                if self.output_activation == "tanh":
                    dz = upstream * (1.0 - tape.output**2)
                else:
                    dz = upstream
            else:
                dz = upstream * _leaky_grad(tape.pre_acts[k])
            grad_w[k] = dz.T @ tape.inputs[k]
            grad_b[k] = dz.sum(axis=0)
            upstream = dz @ self.weights[k]
        return Gradients(grad_w, grad_b), (upstream[0] if single else upstream)


class AdamState:
    """First/second-moment buffers for one network."""

    def __init__(self, net: Mlp, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in net.weights]
        self.v_w = [np.zeros_like(w) for w in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]


def adam_update(net: Mlp, grads: Gradients, state: AdamState, lr: float) -> None:
    """One in-place Adam step with bias correction."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if len(grads.weights) != net.n_layers:
        raise ValueError("gradient/parameter layer counts differ")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for k in range(net.n_layers):
        for param, grad, m, v in (
            (net.weights[k], grads.weights[k], state.m_w[k], state.v_w[k]),
            (net.biases[k], grads.biases[k], state.m_b[k], state.v_b[k]),
        ):
            if grad.shape != param.shape:
                raise ValueError(f"gradient shape {grad.shape} != parameter shape {param.shape}")
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            param -= lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    """target <- tau * source + (1 - tau) * target, parameter-wise."""
    for t_arr, s_arr in zip(target.weights + target.biases, source.weights + source.biases):
        t_arr *= 1.0 - tau
        t_arr += tau * s_arr


def save_weights(net: Mlp, path) -> None:
    """Write the binary weight file.

    Layout: 6 magic bytes "RLAMW1", uint32 LE weight-layer count L, L+1
    uint32 LE layer dims, one activation-tag byte (0=tanh, 1=identity), then
    every weight matrix (row-major) followed by every bias vector,
    layer-by-layer, as little-endian float64.
    """
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<I", net.n_layers))
        f.write(struct.pack(f"<{net.n_layers + 1}I", *net.layer_dims))
        f.write(struct.pack("B", _ACTIVATION_TAGS[net.output_activation]))
        for w in net.weights:
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        for b in net.biases:
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_weights(path, expected_dims=None) -> Mlp:
    """Read a weight file back into a fresh ``Mlp`` (bit-exact round trip)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(WEIGHTS_MAGIC) + 4:
        raise WeightsTruncatedError("file too short for the header")
    if data[: len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise WeightsFormatError(f"bad magic bytes {data[:len(WEIGHTS_MAGIC)]!r}")
    offset = len(WEIGHTS_MAGIC)
    (n_layers,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if n_layers < 1 or n_layers > 1024:
        raise WeightsShapeError(f"implausible layer count {n_layers}")
    if len(data) < offset + 4 * (n_layers + 1) + 1:
        raise WeightsTruncatedError("file too short for the dimension table")
    dims = list(struct.unpack_from(f"<{n_layers + 1}I", data, offset))
    offset += 4 * (n_layers + 1)
    if any(d < 1 for d in dims):
        raise WeightsShapeError(f"invalid layer dims {dims}")
    tag = data[offset]
    offset += 1
    if tag not in _TAG_ACTIVATIONS:
        raise WeightsFormatError(f"unknown activation tag {tag}")
    if expected_dims is not None and dims != list(expected_dims):
        raise WeightsShapeError(f"expected layer dims {list(expected_dims)}, file has {dims}")
    n_params = sum(o * i for i, o in zip(dims[:-1], dims[1:])) + sum(dims[1:])
    payload = data[offset:]
    if len(payload) < 8 * n_params:
        raise WeightsTruncatedError(
            f"payload holds {len(payload) // 8} of {n_params} parameters"
        )
    if len(payload) > 8 * n_params:
        raise WeightsFormatError(f"{len(payload) - 8 * n_params} trailing bytes after payload")
    flat = np.frombuffer(payload, dtype="<f8").astype(float)
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(flat[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in).copy())
        pos += fan_out * fan_in
    for fan_out in dims[1:]:
        biases.append(flat[pos : pos + fan_out].copy())
        pos += fan_out
    return Mlp(dims, weights, biases, _TAG_ACTIVATIONS[tag])
