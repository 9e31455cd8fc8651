"""Dense feed-forward network with hand-written backpropagation and Adam.

The network maps an input row ``(t_prev, t, x...)`` to a single unconstrained
real number, the estimated log hazard.  Parameters live in one contiguous
float64 buffer so that the optimizer can update everything with a handful of
vectorised operations; per-layer arrays are views into that buffer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "linear")


@dataclass
class LayerParams:
    """Weights ``(out_dim, in_dim)`` and bias ``(out_dim,)`` of one layer."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class Network:
    """Two relu hidden layers followed by a linear scalar output.

    ``input_mean`` and ``input_scale`` hold the z-score statistics applied to
    raw inputs before the first layer.
    """

    def __init__(self, layers, input_mean=None, input_scale=None):
        layers = list(layers)
        if len(layers) != 3:
            raise ValueError(f"expected 3 layers, got {len(layers)}")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError("adjacent layer dimensions do not chain")
        for layer in layers[:-1]:
            if layer.activation != "relu":
                raise ValueError("hidden layers must use relu")
        if layers[-1].activation != "linear" or layers[-1].out_dim != 1:
            raise ValueError("output layer must be linear with out_dim 1")
        for layer in layers:
            if layer.bias.shape != (layer.out_dim,):
                raise ValueError("bias shape does not match weights")

        sizes = [l.weights.size + l.bias.size for l in layers]
        self.flat = np.empty(sum(sizes), dtype=np.float64)
        self.layers = []
        offset = 0
        for layer in layers:
            w_size = layer.weights.size
            w = self.flat[offset:offset + w_size].reshape(layer.weights.shape)
            w[...] = layer.weights
            offset += w_size
            b = self.flat[offset:offset + layer.out_dim]
            b[...] = layer.bias
            offset += layer.out_dim
            self.layers.append(LayerParams(w, b, layer.activation))
        if not np.all(np.isfinite(self.flat)):
            raise ValueError("network parameters must be finite")

        d = self.input_dim
        self.input_mean = np.zeros(d) if input_mean is None else np.asarray(input_mean, dtype=np.float64).copy()
        self.input_scale = np.ones(d) if input_scale is None else np.asarray(input_scale, dtype=np.float64).copy()
        if self.input_mean.shape != (d,) or self.input_scale.shape != (d,):
            raise ValueError("standardizer length must equal input_dim")
        if np.any(self.input_scale <= 0):
            raise ValueError("standardizer scales must be positive")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def hidden_width(self) -> int:
        return self.layers[0].out_dim

    @property
    def n_params(self) -> int:
        return self.flat.size

    def copy(self) -> "Network":
        return Network(
            [LayerParams(l.weights, l.bias, l.activation) for l in self.layers],
            self.input_mean,
            self.input_scale,
        )

    def with_flat(self, flat: np.ndarray) -> "Network":
        """Return a network with the same shapes and the given flat parameters."""
        out = self.copy()
        out.flat[...] = flat
        return out

    def set_standardizer(self, inputs: np.ndarray) -> None:
        """Fit the z-score statistics on ``inputs`` (rows x input_dim)."""
        inputs = np.asarray(inputs, dtype=np.float64)
        self.input_mean = inputs.mean(axis=0)
        scale = inputs.std(axis=0)
        # constant columns pass through centred but unscaled
        scale[scale == 0] = 1.0
        self.input_scale = scale

    # --- serialization ---

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "input_dim": self.input_dim,
            "layers": [
                {
                    "in_dim": l.in_dim,
                    "out_dim": l.out_dim,
                    "activation": l.activation,
                    "weights": l.weights.ravel().tolist(),
                    "bias": l.bias.tolist(),
                }
                for l in self.layers
            ],
            "standardizer": {
                "mean": self.input_mean.tolist(),
                "scale": self.input_scale.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Network":
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format version {doc.get('format_version')!r}")
        layers = [
            LayerParams(
                np.asarray(l["weights"], dtype=np.float64).reshape(l["out_dim"], l["in_dim"]),
                np.asarray(l["bias"], dtype=np.float64),
                l["activation"],
            )
            for l in doc["layers"]
        ]
        std = doc["standardizer"]
        return cls(layers, std["mean"], std["scale"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Network":
        return cls.from_dict(json.loads(text))


@dataclass
class GradientBundle:
    """Gradient of a scalar objective with respect to every network parameter.

    ``flat`` mirrors ``Network.flat``; ``weights`` and ``biases`` are views.
    """

    flat: np.ndarray
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @classmethod
    def zeros_like(cls, net: Network) -> "GradientBundle":
        flat = np.zeros_like(net.flat)
        weights, biases = [], []
        offset = 0
        for l in net.layers:
            weights.append(flat[offset:offset + l.weights.size].reshape(l.weights.shape))
            offset += l.weights.size
            biases.append(flat[offset:offset + l.out_dim])
            offset += l.out_dim
        return cls(flat, weights, biases)


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_network(cls, net: Network, learning_rate: float = 0.001, **kwargs) -> "AdamState":
        return cls(np.zeros_like(net.flat), np.zeros_like(net.flat), 0, learning_rate, **kwargs)


def init_network(input_dim: int, hidden_width: int = 64, seed: int = 0) -> Network:
    """Build a ``input_dim -> width -> width -> 1`` network.

    Weights are uniform with standard deviation ``sqrt(2 / fan_in)``; biases
    start at zero.
    """
    if input_dim < 1 or hidden_width < 1:
        raise ValueError("input_dim and hidden_width must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [input_dim, hidden_width, hidden_width, 1]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        # uniform(-a, a) has std a/sqrt(3)
        bound = np.sqrt(3.0) * np.sqrt(2.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = "linear" if i == len(dims) - 2 else "relu"
        layers.append(LayerParams(w, np.zeros(fan_out), act))
    return Network(layers)


def _as_batch(net: Network, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"expected inputs with {net.input_dim} columns, got shape {x.shape}")
    return x


def _trace(net: Network, x: np.ndarray):
    """Forward pass keeping the activations needed by backward."""
    a = (x - net.input_mean) / net.input_scale
    acts = [a]
    for layer in net.layers[:-1]:
        a = a @ layer.weights.T + layer.bias
        np.maximum(a, 0.0, out=a)
        acts.append(a)
    out = net.layers[-1]
    h = a @ out.weights[0] + out.bias[0]
    return h, acts


def forward(net: Network, inputs) -> np.ndarray:
    """Network output ĥ for each input row."""
    x = _as_batch(net, inputs)
    return _trace(net, x)[0]


def forward_chunked(net: Network, inputs, chunk: int = 65536) -> np.ndarray:
    """Same as ``forward`` but bounded memory for very large row sets."""
    x = _as_batch(net, inputs)
    if len(x) <= chunk:
        return _trace(net, x)[0]
    return np.concatenate([_trace(net, x[i:i + chunk])[0] for i in range(0, len(x), chunk)])


def backward(net: Network, inputs, dloss_dh, trace=None) -> GradientBundle:
    """Gradient of ``sum_r dloss_dh[r] * h(inputs[r])`` w.r.t. all parameters.

    ``trace`` may carry the activations from a previous ``_trace`` call on the
    same inputs to avoid recomputing the forward pass.
    """
    x = _as_batch(net, inputs)
    g = np.asarray(dloss_dh, dtype=np.float64).reshape(-1)
    if g.shape[0] != x.shape[0]:
        raise ValueError("dloss_dh length must equal batch size")
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite upstream gradient")
    if trace is None:
        _, acts = _trace(net, x)
    else:
        acts = trace
    grads = GradientBundle.zeros_like(net)
    _backprop(net, acts, g, grads)
    return grads


def _backprop(net: Network, acts, g: np.ndarray, grads: GradientBundle) -> None:
    """Write the gradient for upstream ``g`` into ``grads`` (no validation)."""
    out = net.layers[-1]
    np.dot(g, acts[2], out=grads.weights[2][0])
    grads.biases[2][0] = g.sum()
    delta = np.multiply.outer(g, out.weights[0])
    delta *= acts[2] > 0
    np.dot(delta.T, acts[1], out=grads.weights[1])
    delta.sum(axis=0, out=grads.biases[1])
    delta = delta @ net.layers[1].weights
    delta *= acts[1] > 0
    np.dot(delta.T, acts[0], out=grads.weights[0])
    delta.sum(axis=0, out=grads.biases[0])


def adam_step(net: Network, grads: GradientBundle, state: AdamState):
    """One bias-corrected Adam update. Returns new ``(Network, AdamState)``."""
    if grads.flat.shape != net.flat.shape or state.first_moment.shape != net.flat.shape:
        raise ValueError("gradient / optimizer state shapes do not match network")
    g = grads.flat
    step = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    new_flat = net.flat - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(m, v, step, state.learning_rate, state.beta1, state.beta2, state.epsilon)
    return net.with_flat(new_flat), new_state


def _adam_inplace(net: Network, grads: GradientBundle, state: AdamState, scratch: np.ndarray) -> None:
    """``adam_step`` updating ``net.flat`` and ``state`` in place."""
    g = grads.flat
    m, v = state.first_moment, state.second_moment
    state.step_count += 1
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    np.multiply(g, g, out=scratch)
    scratch *= 1.0 - state.beta2
    v += scratch
    step_size = state.learning_rate / (1.0 - state.beta1 ** state.step_count)
    np.divide(v, 1.0 - state.beta2 ** state.step_count, out=scratch)
    np.sqrt(scratch, out=scratch)
    scratch += state.epsilon
    np.divide(m, scratch, out=scratch)
    scratch *= step_size
    net.flat -= scratch
