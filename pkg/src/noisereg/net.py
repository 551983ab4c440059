"""Dense feed-forward networks with exact backpropagation.

A layer computes ``f(W @ y + b)``. Inputs may be a single vector or a
2-D batch (one sample per row); forward results for a batch are
bit-identical to evaluating each row on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .numkit import RandomStream, ShapeError, as_mat, as_vec, matvec

BCE_CLAMP = 1e-12


class Activation(str, Enum):
    IDENTITY = "identity"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"

    def __call__(self, a):
        if self is Activation.IDENTITY:
            return np.array(a, dtype=np.float64, copy=True)
        if self is Activation.SIGMOID:
            return _sigmoid(a)
        if self is Activation.TANH:
            return np.tanh(a)
        return np.where(a > 0, a, 0.0)

    def derivative(self, a, out):
        """Derivative given the pre-activation ``a`` and output ``out``.

        relu'(0) is taken to be 0.
        """
        if self is Activation.IDENTITY:
            return np.ones_like(a)
        if self is Activation.SIGMOID:
            return out * (1.0 - out)
        if self is Activation.TANH:
            return 1.0 - out * out
        return (a > 0).astype(np.float64)


def _sigmoid(a):
    a = np.asarray(a, dtype=np.float64)
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Loss(str, Enum):
    MSE = "mse"
    BCE = "bce"


@dataclass(frozen=True)
class LayerParams:
    W: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        W, b = as_mat(self.W), as_vec(self.b)
        if len(b) != W.shape[0]:
            raise ShapeError(f"bias length {len(b)} != weight rows {W.shape[0]}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class NetworkParams:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        for k in range(1, len(layers)):
            if layers[k].in_dim != layers[k - 1].out_dim:
                raise ShapeError(
                    f"layer {k} expects {layers[k].in_dim} inputs but layer {k - 1} "
                    f"produces {layers[k - 1].out_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def size(self) -> int:
        return sum(l.W.size + l.b.size for l in self.layers)

    def flatten(self) -> np.ndarray:
        """Parameter vector: per layer, W row-major then b."""
        parts = [np.concatenate([l.W.ravel(), l.b]) for l in self.layers]
        return np.concatenate(parts) if parts else np.zeros(0)

    def unflatten(self, theta) -> "NetworkParams":
        theta = as_vec(theta)
        if len(theta) != self.size:
            raise ShapeError(f"expected {self.size} parameters, got {len(theta)}")
        layers, pos = [], 0
        for l in self.layers:
            nw = l.W.size
            W = theta[pos : pos + nw].reshape(l.W.shape)
            b = theta[pos + nw : pos + nw + l.out_dim]
            pos += nw + l.out_dim
            layers.append(LayerParams(W.copy(), b.copy(), l.activation))
        return NetworkParams(tuple(layers))


@dataclass(frozen=True)
class ParamGradient:
    """Gradient with the same layout as :class:`NetworkParams`."""

    dW: tuple
    db: tuple

    def flatten(self) -> np.ndarray:
        parts = [np.concatenate([w.ravel(), b]) for w, b in zip(self.dW, self.db)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def __add__(self, other: "ParamGradient") -> "ParamGradient":
        return ParamGradient(
            tuple(a + b for a, b in zip(self.dW, other.dW)),
            tuple(a + b for a, b in zip(self.db, other.db)),
        )

    def scale(self, c: float) -> "ParamGradient":
        return ParamGradient(tuple(c * w for w in self.dW), tuple(c * b for b in self.db))


@dataclass
class ForwardTrace:
    inputs: list = field(default_factory=list)  # y^(l) fed into each layer
    pre: list = field(default_factory=list)  # W y + b per layer
    post: list = field(default_factory=list)  # f(pre) per layer

    @property
    def prediction(self) -> np.ndarray:
        return self.post[-1] if self.post else self.inputs[0]


def layer_forward(layer: LayerParams, y_prev) -> np.ndarray:
    y_prev = np.asarray(y_prev, dtype=np.float64)
    return layer.activation(matvec(layer.W, y_prev) + layer.b)


def forward(params: NetworkParams, x, masks=None) -> ForwardTrace:
    """Evaluate the network, keeping every intermediate.

    ``masks`` optionally gives, per layer, a 0/1 weight mask shaped like
    the bias-augmented weight matrix ``[W | b]`` (``None`` entries leave a
    layer unmasked). The last mask column gates the bias.
    """
    y = np.asarray(x, dtype=np.float64)
    if y.ndim not in (1, 2) or (params.layers and y.shape[-1] != params.in_dim):
        raise ShapeError(f"input of shape {y.shape} does not fit network input {params.in_dim}")
    trace = ForwardTrace(inputs=[y])
    for k, layer in enumerate(params.layers):
        W, b = _masked(layer, masks[k] if masks is not None else None)
        a = matvec(W, y) + b
        y = layer.activation(a)
        trace.pre.append(a)
        trace.post.append(y)
        trace.inputs.append(y)
    if params.layers:
        trace.inputs.pop()
    return trace


def _masked(layer: LayerParams, mask):
    if mask is None:
        return layer.W, layer.b
    return layer.W * mask[:, :-1], layer.b * mask[:, -1]


def predict(params: NetworkParams, x) -> np.ndarray:
    return forward(params, x).prediction


def loss(kind: Loss, pred, target) -> float:
    """Per-sample loss; for a batch, the mean over samples."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean(loss_per_sample(kind, pred, target)))


def loss_per_sample(kind: Loss, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    if Loss(kind) is Loss.MSE:
        return np.mean((pred - target) ** 2, axis=-1)
    q = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return -np.mean(target * np.log(q) + (1.0 - target) * np.log(1.0 - q), axis=-1)


def _loss_grad(kind: Loss, pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    n = pred.shape[-1]
    if Loss(kind) is Loss.MSE:
        return 2.0 * (pred - target) / n
    q = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    inside = (pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP)
    return np.where(inside, (q - target) / (q * (1.0 - q)) / n, 0.0)


def backward(params: NetworkParams, x, target, kind: Loss, masks=None) -> ParamGradient:
    """Gradient of the loss with respect to every weight and bias.

    With a batch ``x`` (one sample per row) this is the gradient of the
    batch-mean loss, i.e. the mean of the per-sample gradients.
    """
    trace = forward(params, x, masks)
    target = np.asarray(target, dtype=np.float64)
    pred = trace.prediction
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    batched = pred.ndim == 2
    n = pred.shape[0] if batched else 1
    delta = _loss_grad(kind, pred, target)
    dWs, dbs = [], []
    for k in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[k]
        delta = delta * layer.activation.derivative(trace.pre[k], trace.post[k])
        y_in = trace.inputs[k]
        if batched:
            dW = delta.T @ y_in / n
            db = delta.sum(axis=0) / n
        else:
            dW = np.outer(delta, y_in)
            db = delta.copy()
        mask = masks[k] if masks is not None else None
        if mask is not None:
            dW = dW * mask[:, :-1]
            db = db * mask[:, -1]
        W, _ = _masked(layer, mask)
        delta = delta @ W
        dWs.append(dW)
        dbs.append(db)
    return ParamGradient(tuple(reversed(dWs)), tuple(reversed(dbs)))


RELU_KINK_MARGIN = 1e-4


def grad_check(params: NetworkParams, x, target, kind: Loss, h: float = 1e-5, gradient=None) -> float:
    """Max relative error between ``backward`` and central differences.

    The relative error of one parameter is
    ``|analytic - numeric| / max(1e-12, |analytic| + |numeric|)``.
    The perturbed losses are evaluated in ``np.longdouble`` so that
    cancellation in ``f(t + h) - f(t - h)`` does not swamp parameters with
    very small gradients (on platforms where ``longdouble`` is plain double
    this falls back to ordinary precision).
    Parameters whose perturbation by ``+-h`` brings any relu
    pre-activation within ``RELU_KINK_MARGIN`` of zero are excluded; if the
    unperturbed point already sits that close to a kink nothing is compared
    and 0 is returned. ``gradient`` substitutes a precomputed analytic
    gradient (used to confirm the check catches faults).
    """
    if params.size == 0:
        return 0.0
    grad = backward(params, x, target, kind) if gradient is None else gradient
    analytic = grad.flatten()
    if _near_relu_kink(params, forward(params, x)):
        return 0.0
    theta = params.flatten().astype(np.longdouble)
    h_ld = np.longdouble(h)
    x_ld = np.asarray(x, dtype=np.longdouble)
    t_ld = np.asarray(target, dtype=np.longdouble)
    worst = 0.0
    for i in range(len(theta)):
        values, near_kink = [], False
        for step in (h_ld, -h_ld):
            t = theta.copy()
            t[i] += step
            value, kink = _loss_extended(params, t, x_ld, t_ld, kind)
            near_kink |= kink
            values.append(value)
        if near_kink:
            continue
        numeric = float((values[0] - values[1]) / (2 * h_ld))
        err = abs(analytic[i] - numeric) / max(1e-12, abs(analytic[i]) + abs(numeric))
        worst = max(worst, err)
    return worst


def _act_extended(kind: Activation, a):
    if kind is Activation.IDENTITY:
        return a
    if kind is Activation.SIGMOID:
        return 1 / (1 + np.exp(-a))
    if kind is Activation.TANH:
        return np.tanh(a)
    return np.where(a > 0, a, 0)


def _loss_extended(params: NetworkParams, theta, x, target, kind: Loss):
    """Mean loss at flat parameters ``theta`` in extended precision, plus a relu-kink flag."""
    y = x
    pos, kink = 0, False
    for layer in params.layers:
        o, n = layer.out_dim, layer.in_dim
        W = theta[pos:pos + o * n].reshape(o, n)
        b = theta[pos + o * n:pos + o * n + o]
        pos += o * n + o
        a = y @ W.T + b
        if layer.activation is Activation.RELU and np.any(np.abs(a) < RELU_KINK_MARGIN):
            kink = True
        y = _act_extended(layer.activation, a)
    if kind is Loss.MSE:
        per = np.mean((y - target) ** 2, axis=-1)
    else:
        q = np.clip(y, np.longdouble(BCE_CLAMP), 1 - np.longdouble(BCE_CLAMP))
        per = -np.mean(target * np.log(q) + (1 - target) * np.log(1 - q), axis=-1)
    return np.mean(per), kink


def _near_relu_kink(params: NetworkParams, trace: ForwardTrace) -> bool:
    return any(
        layer.activation is Activation.RELU and np.any(np.abs(a) < RELU_KINK_MARGIN)
        for layer, a in zip(params.layers, trace.pre)
    )


def init_network(widths, activations, stream: RandomStream) -> NetworkParams:
    """Uniform weights on ``[-s, s]``, ``s = sqrt(6 / (in + out))``; zero biases."""
    widths = [int(w) for w in widths]
    activations = list(activations)
    if len(activations) != len(widths) - 1:
        raise ValueError(f"{len(widths) - 1} layers need as many activations, got {len(activations)}")
    layers = []
    for k, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        s = np.sqrt(6.0 / (n_in + n_out))
        u = stream.split(f"layer{k}").uniform01(n_in * n_out)
        W = (-s + 2.0 * s * u).reshape(n_out, n_in)
        layers.append(LayerParams(W, np.zeros(n_out), Activation(activations[k])))
    return NetworkParams(tuple(layers))
