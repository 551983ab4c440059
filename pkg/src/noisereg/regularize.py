"""Explicit regularizers: L1/L2 penalties, Dropout and DropConnect masks.

``p`` is always the retention probability: a mask entry of 1 keeps the
unit (or weight), 0 drops it.

DropConnect operates on the bias-augmented weight matrix ``[W | b]``
applied to ``[y, 1]``. A Dropout mask ``r`` on a layer's inputs is the
DropConnect mask whose columns are ``r`` (the same pattern in every
output row) with an all-ones bias column; :func:`embed_neuron_mask` builds
it, and the two forward passes then agree bit for bit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .net import Activation, LayerParams, NetworkParams, layer_forward
from .numkit import DistSpec, RandomStream, ShapeError, as_mat, as_vec, l1_norm, l2_norm_sq, matvec, sample

MAX_MASK_UNITS = 30


@dataclass(frozen=True)
class PenaltySpec:
    """``alpha * R(theta)`` with R the L1 norm or the squared L2 norm.

    ``include_biases=False`` restricts the penalty to weight matrices.
    """

    kind: str
    alpha: float
    include_biases: bool = True

    def __post_init__(self):
        if self.kind not in ("l1", "l2"):
            raise ValueError(f"penalty kind must be 'l1' or 'l2', got {self.kind!r}")
        if not self.alpha >= 0:
            raise ValueError(f"penalty alpha must be >= 0, got {self.alpha}")


class Granularity(str, Enum):
    NEURON = "neuron"  # Dropout
    WEIGHT = "weight"  # DropConnect


class ScaleMode(str, Enum):
    PAPER_INVERSE_P = "paper_inverse_p"
    RETENTION_P = "retention_p"


@dataclass(frozen=True)
class DropSpec:
    p: float
    granularity: Granularity = Granularity.NEURON
    layer_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"retention probability must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "granularity", Granularity(self.granularity))


def penalty(theta_flat, spec: PenaltySpec) -> float:
    norm = l1_norm if spec.kind == "l1" else l2_norm_sq
    return spec.alpha * norm(theta_flat)


def penalized_loss(base: float, theta_flat, spec: PenaltySpec) -> float:
    return base + penalty(theta_flat, spec)


def penalty_grad(theta_flat, spec: PenaltySpec) -> np.ndarray:
    """``alpha * sign(theta)`` (sign(0) = 0) for L1, ``2 alpha theta`` for L2."""
    theta = as_vec(theta_flat)
    if spec.kind == "l1":
        return spec.alpha * np.sign(theta)
    return 2.0 * spec.alpha * theta


def penalty_mask(params: NetworkParams, spec: PenaltySpec) -> np.ndarray:
    """0/1 vector over ``params.flatten()`` marking penalized entries."""
    parts = []
    for l in params.layers:
        parts += [np.ones(l.W.size), np.full(l.out_dim, 1.0 if spec.include_biases else 0.0)]
    return np.concatenate(parts) if parts else np.zeros(0)


def network_penalty(params: NetworkParams, spec: PenaltySpec) -> float:
    return penalty(params.flatten() * penalty_mask(params, spec), spec)


def network_penalty_grad(params: NetworkParams, spec: PenaltySpec) -> np.ndarray:
    mask = penalty_mask(params, spec)
    return penalty_grad(params.flatten() * mask, spec) * mask


def _check_mask(m: np.ndarray) -> np.ndarray:
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("mask entries must be 0 or 1")
    return m


def dropout_forward(layer: LayerParams, y_prev, mask) -> np.ndarray:
    """``f(W @ (r * y_prev) + b)``; ``y_prev`` may be a batch of rows."""
    y_prev = np.asarray(y_prev, dtype=np.float64)
    r = _check_mask(as_vec(mask))
    if y_prev.shape[-1] != len(r):
        raise ShapeError(f"mask length {len(r)} != input length {y_prev.shape[-1]}")
    return layer_forward(layer, r * y_prev)


def augment_layer(layer: LayerParams) -> np.ndarray:
    """``[W | b]``: the weight matrix with the bias as a trailing column."""
    return np.hstack([layer.W, layer.b[:, None]])


def augment_input(y) -> np.ndarray:
    """``[y, 1]`` (per row for a batch)."""
    y = np.asarray(y, dtype=np.float64)
    return np.concatenate([y, np.ones(y.shape[:-1] + (1,))], axis=-1)


def dropconnect_forward(W_aug, y_prev_aug, mask, activation=Activation.IDENTITY) -> np.ndarray:
    """``f((R * W_aug) @ y_prev_aug)``."""
    W_aug = as_mat(W_aug)
    R = _check_mask(as_mat(mask))
    if R.shape != W_aug.shape:
        raise ShapeError(f"mask shape {R.shape} != weight shape {W_aug.shape}")
    return Activation(activation)(matvec(R * W_aug, y_prev_aug))


def embed_neuron_mask(mask, out_dim: int) -> np.ndarray:
    """DropConnect mask equivalent to the Dropout input mask ``mask``.

    Every one of the ``out_dim`` rows repeats ``mask`` over the input
    columns; the bias column is fixed at 1.
    """
    r = _check_mask(as_vec(mask))
    return np.tile(np.append(r, 1.0), (int(out_dim), 1))


def sample_neuron_mask(p: float, n: int, stream: RandomStream) -> np.ndarray:
    return sample(DistSpec.bernoulli(p), n, stream)


def sample_weight_mask(p: float, out_dim: int, in_dim: int, stream: RandomStream) -> np.ndarray:
    """Independent Bernoulli(p) entry for every weight of ``[W | b]``."""
    return sample(DistSpec.bernoulli(p), out_dim * (in_dim + 1), stream).reshape(out_dim, in_dim + 1)


def sample_layer_masks(params: NetworkParams, drop: DropSpec, stream: RandomStream) -> list:
    """Per-layer weight masks for :func:`noisereg.net.forward`; only
    ``drop.layer_index`` is masked."""
    if not 0 <= drop.layer_index < len(params.layers):
        raise ValueError(f"drop layer_index {drop.layer_index} out of range for {len(params.layers)} layers")
    layer = params.layers[drop.layer_index]
    if drop.granularity is Granularity.NEURON:
        R = embed_neuron_mask(sample_neuron_mask(drop.p, layer.in_dim, stream), layer.out_dim)
    else:
        R = sample_weight_mask(drop.p, layer.out_dim, layer.in_dim, stream)
    masks = [None] * len(params.layers)
    masks[drop.layer_index] = R
    return masks


def inference_scale(params: NetworkParams, p: float, mode=ScaleMode.RETENTION_P, layers=None) -> NetworkParams:
    """Rescale the weight matrices (not biases) of ``layers`` after training.

    ``paper_inverse_p`` multiplies by ``1/p``; ``retention_p`` by ``p``.
    ``layers`` defaults to every layer.
    """
    mode = ScaleMode(mode)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"retention probability must lie in [0, 1], got {p}")
    if mode is ScaleMode.PAPER_INVERSE_P:
        if p == 0.0:
            raise ZeroDivisionError("cannot scale by 1/p with p = 0")
        factor = 1.0 / p
    else:
        factor = p
    chosen = range(len(params.layers)) if layers is None else set(layers)
    return NetworkParams(
        tuple(
            LayerParams(l.W * factor, l.b.copy(), l.activation) if k in chosen else l
            for k, l in enumerate(params.layers)
        )
    )


def count_mask_patterns(n_units: int) -> int:
    """Number of distinct thinned networks for ``n_units`` maskable units."""
    n_units = int(n_units)
    if n_units < 0:
        raise ValueError("unit count must be >= 0")
    if n_units > MAX_MASK_UNITS:
        raise OverflowError(f"refusing to count masks for more than {MAX_MASK_UNITS} units")
    return 1 << n_units


def enumerate_masks(n_units: int):
    """Every 0/1 neuron mask of length ``n_units``."""
    for bits in itertools.product((0.0, 1.0), repeat=int(n_units)):
        yield np.array(bits)
