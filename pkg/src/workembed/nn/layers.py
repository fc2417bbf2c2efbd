"""Dense layers, activations and small multilayer perceptrons."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, param

ACTIVATIONS = ("tanh", "sigmoid", "relu", "identity")
SMOOTH_ACTIVATIONS = ("tanh", "sigmoid", "identity")


def activate(x: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        return x.tanh()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind == "relu":
        return x.relu()
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_derivative(out: Tensor, kind: str) -> Tensor:
    """Pointwise derivative of the activation, written in terms of its output.

    The result stays inside the graph so penalties built from it remain
    differentiable.
    """
    if kind == "tanh":
        return 1.0 - out.square()
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "identity":
        return Tensor(np.ones(out.shape))
    raise ValueError(f"activation {kind!r} has no smooth derivative")


def dense_init(fan_in: int, fan_out: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Glorot-uniform weights of shape (fan_in, fan_out) and a zero bias."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fan_in and fan_out must be >= 1, got {fan_in}, {fan_out}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
    return weight, np.zeros(fan_out)


class Dense:
    def __init__(self, fan_in: int, fan_out: int, seed: int, name: str = "dense"):
        w, b = dense_init(fan_in, fan_out, seed)
        self.name = name
        self.weight = param(w, name=f"{name}.weight")
        self.bias = param(b, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class MLP:
    """Stack of dense layers: ``sizes[0] -> ... -> sizes[-1]``.

    Hidden layers use ``hidden``; the last layer uses ``output``.
    """

    def __init__(self, sizes: list[int], seed: int, hidden: str = "tanh",
                 output: str = "identity", name: str = "mlp"):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output size")
        for kind in (hidden, output):
            if kind not in ACTIVATIONS:
                raise ValueError(f"unknown activation {kind!r}")
        self.sizes = list(sizes)
        self.hidden = hidden
        self.output = output
        self.name = name
        seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=len(sizes) - 1)
        self.layers = [Dense(a, b, int(s), name=f"{name}.{i}")
                       for i, (a, b, s) in enumerate(zip(sizes[:-1], sizes[1:], seeds))]

    @property
    def activations(self) -> list[str]:
        return [self.hidden] * (len(self.layers) - 1) + [self.output]

    def __call__(self, x: Tensor) -> Tensor:
        for layer, kind in zip(self.layers, self.activations):
            x = activate(layer(x), kind)
        return x

    def forward_with_jacobian(self, x: Tensor, cols: slice | None = None) -> tuple[Tensor, Tensor]:
        """Forward pass plus the per-sample input Jacobian, built in-graph.

        Returns ``(out, jac)`` where ``out`` is the full network output and
        ``jac[n, a, b] = d out[n, cols][b] / d x[n, a]``. The Jacobian is the product of
        layer weights and diagonal activation derivatives, so differentiating
        a function of it needs only first-order autodiff.
        """
        acts = self.activations
        if any(kind not in ("tanh", "sigmoid", "identity") for kind in acts):
            raise ValueError("Jacobian assembly requires smooth activations (tanh/sigmoid/identity)")
        h = x
        jac = None
        last = len(self.layers) - 1
        for i, (layer, kind) in enumerate(zip(self.layers, acts)):
            h = activate(layer(h), kind)
            weight = layer.weight
            deriv = activation_derivative(h, kind)
            # only the requested output columns enter the final product
            if i == last and cols is not None:
                weight = weight[:, cols]
                deriv = deriv[:, cols]
            n, width = deriv.shape
            d3 = deriv.reshape(n, 1, width)
            if jac is None:
                jac = weight.reshape(1, *weight.shape) * d3
            else:
                jac = (jac @ weight) * d3
        return h, jac

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}
