"""Minibatch SGD training and generalization-gap measurement."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import net
from .augment import AugmentSpec, generate_batch
from .net import Loss, NetworkParams, ParamGradient
from .numkit import RandomStream, ShapeError
from .regularize import DropSpec, PenaltySpec, ScaleMode, inference_scale, network_penalty_grad, sample_layer_masks

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "domain")
DIVERGENCE_LIMIT = 1e12


@dataclass
class Dataset:
    """Rows of inputs ``x``, optional features ``z`` and labels ``y``.

    ``split`` tags each row ``train``, ``val`` or ``domain``. When
    ``full_domain`` is true the rows together enumerate the whole problem
    domain, so every train and val row is also a domain row.
    """

    x: np.ndarray
    y: np.ndarray
    split: np.ndarray
    z: np.ndarray | None = None
    full_domain: bool = False
    decoder: object = None
    name: str = ""

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        self.split = np.asarray(self.split, dtype=object)
        n = len(self.x)
        if len(self.y) != n or len(self.split) != n:
            raise ShapeError("x, y and split must have one entry per row")
        if self.z is not None:
            self.z = np.atleast_2d(np.asarray(self.z, dtype=np.float64))
            if len(self.z) != n:
                raise ShapeError("z must have one row per sample")
        bad = set(self.split.tolist()) - set(SPLITS)
        if bad:
            raise ValueError(f"unknown split tags {sorted(bad)}")
        if "domain" in self.split.tolist():
            self.full_domain = True

    def __len__(self):
        return len(self.x)

    def rows(self, name: str) -> np.ndarray:
        if name == "domain":
            if not self.full_domain:
                raise ValueError("dataset has no full-domain split")
            return np.arange(len(self))
        return np.flatnonzero(self.split == name)

    def part(self, name: str):
        idx = self.rows(name)
        return self.x[idx], (None if self.z is None else self.z[idx]), self.y[idx]

    def count(self, name: str) -> int:
        return len(self.rows(name)) if name != "domain" or self.full_domain else 0


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.05
    epochs: int = 100
    minibatch_size: int = 16
    seed: int = 0
    loss: Loss = Loss.MSE
    penalty: PenaltySpec | None = None
    drop: DropSpec | None = None
    augmentation: AugmentSpec | None = None
    presentation: str = "fresh"  # fresh noise per presentation, or a frozen augmented set
    frozen_copies: int = 1
    keep_originals: bool = True
    mask_granularity: str = "per_minibatch"
    scale_mode: ScaleMode = ScaleMode.RETENTION_P
    sampling: str = "without_replacement"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"learning rate must be > 0, got {self.eta}")
        if self.epochs < 0 or self.minibatch_size < 1:
            raise ValueError("epochs must be >= 0 and minibatch_size >= 1")
        if self.presentation not in ("fresh", "frozen"):
            raise ValueError(f"presentation must be 'fresh' or 'frozen', got {self.presentation!r}")
        if self.mask_granularity not in ("per_epoch", "per_minibatch"):
            raise ValueError(f"mask_granularity must be 'per_epoch' or 'per_minibatch', got {self.mask_granularity!r}")
        if self.sampling not in ("without_replacement", "with_replacement"):
            raise ValueError(f"sampling must be 'without_replacement' or 'with_replacement', got {self.sampling!r}")
        object.__setattr__(self, "loss", Loss(self.loss))
        object.__setattr__(self, "scale_mode", ScaleMode(self.scale_mode))


@dataclass(frozen=True)
class Topology:
    widths: tuple
    activations: tuple

    def init(self, stream: RandomStream) -> NetworkParams:
        return net.init_network(self.widths, self.activations, stream)


@dataclass
class TrainResult:
    params: NetworkParams
    losses: list = field(default_factory=list)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"training diverged at epoch {epoch}: mean loss {value!r}")
        self.epoch = epoch
        self.value = value


@dataclass(frozen=True)
class GapReport:
    train_loss: float
    eval_loss: float
    gap: float
    estimator: str  # "exact" or "validation"


def sgd_step(theta: NetworkParams, grad: ParamGradient, eta: float) -> NetworkParams:
    if len(grad.dW) != len(theta.layers):
        raise ShapeError("gradient and parameters have different layer counts")
    layers = []
    for l, dW, db in zip(theta.layers, grad.dW, grad.db):
        if dW.shape != l.W.shape or db.shape != l.b.shape:
            raise ShapeError("gradient shape does not match parameters")
        layers.append(net.LayerParams(l.W - eta * dW, l.b - eta * db, l.activation))
    return NetworkParams(tuple(layers))


def minibatch_gradient(
    theta: NetworkParams,
    x,
    y,
    kind: Loss,
    penalty: PenaltySpec | None = None,
    drop: DropSpec | None = None,
    stream: RandomStream | None = None,
    masks=None,
) -> ParamGradient:
    """Mean per-sample gradient over the batch, plus the penalty gradient.

    With ``drop`` set, one mask is drawn from ``stream`` and shared by the
    whole batch; pass ``masks`` instead to reuse masks drawn elsewhere.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("minibatch is empty")
    if masks is None and drop is not None:
        if stream is None:
            raise ValueError("sampling drop masks needs a random stream")
        masks = sample_layer_masks(theta, drop, stream)
    grad = net.backward(theta, x, y, kind, masks)
    if penalty is not None:
        grad = grad + _unflatten_grad(theta, network_penalty_grad(theta, penalty))
    return grad


def _unflatten_grad(theta: NetworkParams, flat: np.ndarray) -> ParamGradient:
    p = theta.unflatten(flat)
    return ParamGradient(tuple(l.W for l in p.layers), tuple(l.b for l in p.layers))


def _batches(n: int, config: TrainConfig, stream: RandomStream):
    m = min(config.minibatch_size, n)
    if config.sampling == "with_replacement":
        return [stream.integers(n, m) for _ in range(math.ceil(n / m))]
    perm = stream.permutation(n)
    return [perm[i : i + m] for i in range(0, n, m)]


def train(config: TrainConfig, data: Dataset, topology) -> TrainResult:
    """Minibatch SGD on the train split.

    ``topology`` is a :class:`Topology` (initialized from the config seed)
    or ready-made :class:`NetworkParams`. Each epoch shuffles the train
    rows, walks consecutive minibatches, applies augmentation and masks,
    and takes one SGD step per batch. The recorded loss is the epoch mean
    of the batch data losses as presented. Drop-trained weights are
    rescaled with ``config.scale_mode`` at the end.
    """
    root = RandomStream(config.seed)
    params = topology.init(root.split("init")) if isinstance(topology, Topology) else topology
    x, z, y = data.part("train")
    if len(x) == 0:
        raise ValueError("train split is empty")
    aug = config.augmentation
    if aug is not None and config.presentation == "frozen":
        x, z, y = _frozen_set(x, z, y, aug, config, root.split("frozen"))
        aug = None
    if config.minibatch_size > len(x):
        raise ValueError(f"minibatch_size {config.minibatch_size} exceeds train size {len(x)}")

    shuffle, noise, mask_stream = root.split("shuffle"), root.split("augment"), root.split("masks")
    losses = []
    for epoch in range(config.epochs):
        masks = None
        if config.drop is not None and config.mask_granularity == "per_epoch":
            masks = sample_layer_masks(params, config.drop, mask_stream.split(("epoch", epoch)))
        total, count = 0.0, 0
        for b, idx in enumerate(_batches(len(x), config, shuffle.split(epoch))):
            xb, yb = x[idx], y[idx]
            if aug is not None:
                xb, yb = aug.apply(xb, None if z is None else z[idx], yb, noise.split((epoch, b)))
            if config.drop is not None and config.mask_granularity == "per_minibatch":
                masks = sample_layer_masks(params, config.drop, mask_stream.split((epoch, b)))
            pred = net.forward(params, xb, masks).prediction
            total += float(np.sum(net.loss_per_sample(config.loss, pred, yb)))
            count += len(idx)
            grad = minibatch_gradient(params, xb, yb, config.loss, config.penalty, masks=masks)
            params = sgd_step(params, grad, config.eta)
        mean = total / count
        if not math.isfinite(mean) or mean > DIVERGENCE_LIMIT:
            raise TrainingDiverged(epoch, mean)
        losses.append(mean)
        log.debug("epoch %d loss %.6g", epoch, mean)
    if config.drop is not None:
        params = inference_scale(params, config.drop.p, config.scale_mode, layers=[config.drop.layer_index])
    return TrainResult(params, losses)


def _frozen_set(x, z, y, aug: AugmentSpec, config: TrainConfig, stream: RandomStream):
    batch = generate_batch(x, y, aug, config.frozen_copies * len(x), stream, z=z)
    xa = np.array([s.x_hat for s in batch])
    ya = np.array([s.y for s in batch])
    za = None if z is None else z[[s.origin_index for s in batch]]
    if not config.keep_originals:
        return xa, za, ya
    return np.vstack([x, xa]), (None if z is None else np.vstack([z, za])), np.vstack([y, ya])


class Memorizer:
    """Lookup model: exact stored label for a seen input, ``default`` otherwise."""

    def __init__(self, x, y, default=None):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        self.table = {row.tobytes(): label for row, label in zip(x, y)}
        self.default = np.zeros(y.shape[1]) if default is None else np.asarray(default, dtype=np.float64)

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.array([self.table.get(row.tobytes(), self.default) for row in x])


def mean_loss(model, x, y, kind: Loss) -> float:
    """Mean per-sample loss of ``model`` (NetworkParams or anything with ``predict``)."""
    pred = net.predict(model, x) if isinstance(model, NetworkParams) else model.predict(x)
    return float(np.mean(net.loss_per_sample(kind, np.asarray(pred), np.asarray(y, dtype=np.float64))))


def gap_exact(model, data: Dataset, kind: Loss) -> GapReport:
    """Mean loss over the whole domain minus mean loss over the train split."""
    if not data.full_domain:
        raise ValueError("exact gap needs a full-domain split")
    x_tr, _, y_tr = data.part("train")
    if len(x_tr) == 0:
        raise ValueError("train split is empty")
    train_loss = mean_loss(model, x_tr, y_tr, kind)
    eval_loss = mean_loss(model, data.x, data.y, kind)
    return GapReport(train_loss, eval_loss, eval_loss - train_loss, "exact")


def gap_estimate(model, data: Dataset, kind: Loss) -> GapReport:
    """Validation-set estimate: ``L(val) - L(train)``."""
    x_tr, _, y_tr = data.part("train")
    x_va, _, y_va = data.part("val")
    for name, part in (("train", x_tr), ("val", x_va)):
        if len(part) == 0:
            raise ValueError(f"{name} split is empty")
    train_loss = mean_loss(model, x_tr, y_tr, kind)
    eval_loss = mean_loss(model, x_va, y_va, kind)
    return GapReport(train_loss, eval_loss, eval_loss - train_loss, "validation")


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
