"""Dense ReLU networks with hand-written backprop, and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import StructureError


class Mlp:
    """Affine layers with ReLU between them and an identity output.

    ``weights[l]`` has shape ``(fan_in, fan_out)`` so a batch ``x`` of shape
    ``(B, fan_in)`` maps to ``x @ W + b``.  ``relu_output=True`` also
    rectifies the last layer, for use as a shared trunk.
    """

    def __init__(
        self,
        layer_sizes: Sequence[int],
        rng: np.random.Generator | None = None,
        relu_output: bool = False,
    ):
        self.relu_output = relu_output
        sizes = [int(n) for n in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise StructureError(f"bad layer sizes {layer_sizes}")
        self.layer_sizes = sizes
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self.version = 0

    @property
    def params(self) -> List[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...]; arrays are shared, not copied."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, arrays: Sequence[np.ndarray]) -> None:
        arrays = list(arrays)
        if len(arrays) != 2 * len(self.weights):
            raise StructureError("parameter list length does not match network")
        for i in range(len(self.weights)):
            w, b = np.asarray(arrays[2 * i], float), np.asarray(arrays[2 * i + 1], float)
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise StructureError(f"layer {i}: shape mismatch")
            self.weights[i][...] = w
            self.biases[i][...] = b
        self.touch()

    def touch(self) -> None:
        """Mark parameters as modified; invalidates outstanding caches."""
        self.version += 1

    def copy(self) -> "Mlp":
        other = Mlp(self.layer_sizes, relu_output=self.relu_output)
        other.set_params([p.copy() for p in self.params])
        return other

    def num_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x):
        return mlp_forward(self, x)[0]


@dataclass
class MlpCache:
    inputs: List[np.ndarray]  # input to each layer
    pre: List[np.ndarray]  # pre-activation of each layer
    version: int
    net_id: int


def mlp_forward(net: Mlp, x) -> tuple:
    """Returns ``(output, cache)``; 1-D input gives 1-D output."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[-1] != net.layer_sizes[0]:
        raise StructureError(f"input width {h.shape[-1]} != {net.layer_sizes[0]}")
    inputs, pre = [], []
    last = len(net.weights) - 1 if not net.relu_output else -1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    cache = MlpCache(inputs, pre, net.version, id(net))
    return (h[0] if single else h), cache


def mlp_backward(net: Mlp, cache: MlpCache, dout) -> tuple:
    """Gradients of a scalar loss given ``dLoss/dOutput``.

    Returns ``(grads, dinput)`` where ``grads`` follows ``net.params`` order.
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise StructureError("cache does not belong to the current network parameters")
    g = np.atleast_2d(np.asarray(dout, dtype=float))
    if g.shape != cache.pre[-1].shape:
        raise StructureError(f"dout shape {g.shape} != output shape {cache.pre[-1].shape}")
    grads: List[np.ndarray] = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        if i != len(net.weights) - 1 or net.relu_output:
            g = g * (cache.pre[i] > 0)
        grads[2 * i] = cache.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return grads, g


@dataclass
class AdamState:
    lr: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        state = cls(**kw)
        state.first_moment = [np.zeros_like(p, dtype=float) for p in params]
        state.second_moment = [np.zeros_like(p, dtype=float) for p in params]
        return state


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr=None):
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``lr`` overrides ``state.lr``; it may be a per-array sequence.
    """
    if not (len(params) == len(grads) == len(state.first_moment) == len(state.second_moment)):
        raise StructureError("params, grads and optimizer moments must align")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    rates = lr if isinstance(lr, (list, tuple)) else [state.lr if lr is None else lr] * len(params)
    for p, g, m, v, rate in zip(params, grads, state.first_moment, state.second_moment, rates):
        g = np.asarray(g, dtype=float)
        if g.shape != p.shape or m.shape != p.shape:
            raise StructureError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def count_params(model) -> int:
    """Trainable scalar count of a network, a policy, an agent, or a collection of them."""
    if hasattr(model, "count_params"):
        return int(model.count_params())
    if isinstance(model, Mlp):
        return model.num_params()
    if hasattr(model, "num_trainable"):
        return int(model.num_trainable)
    if isinstance(model, (list, tuple)):
        return sum(count_params(m) for m in model)
    raise StructureError(f"cannot count parameters of {type(model).__name__}")
