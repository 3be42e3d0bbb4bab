"""A small fully-connected network with hand-written backpropagation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, NonFiniteError, ValidationError


@dataclass
class GradientTensor:
    """Flat float64 vector plus the (name, shape) layout used to flatten it."""

    values: np.ndarray
    layout: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = sum(int(np.prod(shape)) for _, shape in self.layout)
        if self.values.ndim != 1 or self.values.size != expected:
            raise DimensionError(f"tensor length {self.values.size} does not match layout ({expected})")

    def __len__(self) -> int:
        return self.values.size

    def unflatten(self) -> list[np.ndarray]:
        out, pos = [], 0
        for _, shape in self.layout:
            n = int(np.prod(shape))
            out.append(self.values[pos : pos + n].reshape(shape))
            pos += n
        return out

    @classmethod
    def flatten(cls, arrays, names) -> "GradientTensor":
        layout = tuple((name, tuple(a.shape)) for name, a in zip(names, arrays))
        values = np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)
        return cls(values, layout)

    def copy(self) -> "GradientTensor":
        return GradientTensor(self.values.copy(), self.layout)


def mlp_layout(layer_dims) -> tuple[tuple[str, tuple[int, ...]], ...]:
    layout = []
    for i, (d_in, d_out) in enumerate(zip(layer_dims, layer_dims[1:])):
        layout.append((f"W{i}", (d_in, d_out)))
        layout.append((f"b{i}", (d_out,)))
    return tuple(layout)


def param_count(layer_dims) -> int:
    return sum((d_in + 1) * d_out for d_in, d_out in zip(layer_dims, layer_dims[1:]))


@dataclass
class MlpModel:
    layer_dims: tuple[int, ...]
    weights: GradientTensor
    activation: str = "tanh"
    loss: str = "softmax_cross_entropy"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ValidationError("layer_dims needs at least two positive sizes")
        if self.activation not in ("relu", "tanh"):
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.loss not in ("softmax_cross_entropy", "mse"):
            raise ValidationError(f"unknown loss {self.loss!r}")
        if len(self.weights) != param_count(self.layer_dims):
            raise DimensionError("weight vector length does not match layer_dims")

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_dims, self.weights.copy(), self.activation, self.loss)

    def with_values(self, values) -> "MlpModel":
        return MlpModel(self.layer_dims, GradientTensor(values, self.weights.layout), self.activation, self.loss)

    def predict(self, X) -> np.ndarray:
        return _forward(self, np.asarray(X, dtype=np.float64))[0][-1]


def init_mlp(layer_dims, seed: int = 0, activation: str = "tanh", loss: str = "softmax_cross_entropy") -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    arrays, names = [], []
    for i, (d_in, d_out) in enumerate(zip(layer_dims, layer_dims[1:])):
        r = np.sqrt(6.0 / (d_in + d_out))
        arrays += [rng.uniform(-r, r, size=(d_in, d_out)), np.zeros(d_out)]
        names += [f"W{i}", f"b{i}"]
    return MlpModel(tuple(layer_dims), GradientTensor.flatten(arrays, names), activation, loss)


def zero_mlp(layer_dims, activation: str = "tanh", loss: str = "mse") -> MlpModel:
    return MlpModel(
        tuple(layer_dims),
        GradientTensor(np.zeros(param_count(layer_dims)), mlp_layout(layer_dims)),
        activation,
        loss,
    )


def _act(kind: str, z):
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(kind: str, z, a):
    return 1.0 - a * a if kind == "tanh" else (z > 0).astype(np.float64)


def _forward(model: MlpModel, X: np.ndarray):
    params = model.weights.unflatten()
    n_layers = len(model.layer_dims) - 1
    acts, pre = [X], []
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        z = acts[-1] @ W + b
        if not np.all(np.isfinite(z)):
            raise NonFiniteError(f"non-finite pre-activation in layer {i}", f"layer {i}")
        pre.append(z)
        acts.append(z if i == n_layers - 1 else _act(model.activation, z))
    return acts, pre, params


def _loss_and_delta(kind: str, out: np.ndarray, y: np.ndarray):
    n = out.shape[0]
    if kind == "softmax_cross_entropy":
        labels = np.asarray(y).astype(np.int64).ravel()
        if labels.shape[0] != n:
            raise DimensionError("one integer label per sample expected")
        shifted = out - out.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=1))
        logp = shifted - logsum[:, None]
        loss = -logp[np.arange(n), labels].mean()
        delta = np.exp(logp)
        delta[np.arange(n), labels] -= 1.0
        return loss, delta / n
    target = np.asarray(y, dtype=np.float64).reshape(out.shape)
    diff = out - target
    return float(np.mean(np.sum(diff * diff, axis=1))), 2.0 * diff / n


def forward_backward(model: MlpModel, X, y) -> tuple[float, GradientTensor]:
    """Mean loss over the batch and its gradient with respect to all weights."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise DimensionError("empty batch")
    if X.shape[1] != model.layer_dims[0]:
        raise DimensionError(f"input dimension {X.shape[1]} != {model.layer_dims[0]}")
    acts, pre, params = _forward(model, X)
    loss, delta = _loss_and_delta(model.loss, acts[-1], y)
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite loss", f"layer {len(pre) - 1}")

    grads = [None] * len(params)
    for i in range(len(pre) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[2 * i].T) * _act_grad(model.activation, pre[i - 1], acts[i])
    flat = np.concatenate([g.ravel() for g in grads])
    return float(loss), GradientTensor(flat, model.weights.layout)


def loss_only(model: MlpModel, X, y) -> float:
    acts, _, _ = _forward(model, np.atleast_2d(np.asarray(X, dtype=np.float64)))
    return float(_loss_and_delta(model.loss, acts[-1], y)[0])


def accuracy(model: MlpModel, X, y) -> float:
    return float(np.mean(np.argmax(model.predict(X), axis=1) == np.asarray(y)))


def gradient_check(model: MlpModel, X, y, coords, h: float = 1e-5, floor: float = 1e-7) -> float:
    """Worst relative gap between backprop and central differences at ``coords``.

    The denominator is ``max(|analytic|, |numeric|, floor)`` so near-zero
    gradients are judged on an absolute scale.
    """
    _, grad = forward_backward(model, X, y)
    base = model.weights.values
    worst = 0.0
    for k in coords:
        bumped = base.copy()
        bumped[k] += h
        up = loss_only(model.with_values(bumped), X, y)
        bumped[k] -= 2 * h
        down = loss_only(model.with_values(bumped), X, y)
        numeric = (up - down) / (2 * h)
        analytic = grad.values[k]
        worst = max(worst, abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor))
    return worst


def kink_crossed(model: MlpModel, X, k: int, h: float = 1e-5) -> bool:
    """True if moving weight ``k`` by +-h flips the sign of any ReLU input.

    Central differences are meaningless across such a kink, so gradient
    checks should draw a different coordinate.
    """
    if model.activation != "relu":
        return False
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    signs = []
    for step in (h, -h):
        bumped = model.weights.values.copy()
        bumped[k] += step
        _, pre, _ = _forward(model.with_values(bumped), X)
        signs.append([z > 0 for z in pre[:-1]])
    return any(np.any(a != b) for a, b in zip(*signs))
