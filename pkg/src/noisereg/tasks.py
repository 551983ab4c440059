"""Named, versioned synthetic tasks.

Each task's domain is generated from a seed fixed by its version, so a
name plus parameters identifies the data exactly. Where a task has a
random train/val partition, the partition is drawn from the caller's
``seed``.
"""

from __future__ import annotations

import itertools

import numpy as np

from .augment import Decoder
from .experiment import Dataset
from .net import Activation
from .numkit import DistSpec, RandomStream, sample

LINREG_WEIGHTS = np.array([2.0, -1.0])
LINREG_BIAS = 0.5


def linreg2d(seed: int = 0, n_train: int = 64, n_val: int = 64, label_noise: float = 0.1) -> Dataset:
    """``y = 2 x0 - x1 + 0.5 + eps`` with ``x ~ N(0, I)``; the rows are the whole domain."""
    s = RandomStream(0x4C52_3244)
    n = n_train + n_val
    x = sample(DistSpec.gaussian(0, 1), 2 * n, s.split("x")).reshape(n, 2)
    eps = sample(DistSpec.gaussian(0, label_noise), n, s.split("eps"))
    y = (x @ LINREG_WEIGHTS + LINREG_BIAS + eps)[:, None]
    split = np.array(["train"] * n_train + ["val"] * n_val, dtype=object)
    return Dataset(x, y, split, full_domain=True, name="linreg2d-v1")


def hier_decoder() -> Decoder:
    s = RandomStream(0x48_49_45_52)
    A = sample(DistSpec.gaussian(0, 0.5), 16 * 4, s.split("A")).reshape(16, 4)
    c = sample(DistSpec.gaussian(0, 0.1), 16, s.split("c"))
    return Decoder.linear_nonlinear(A, c, Activation.TANH)


def hier_z4x16(seed: int = 0, n_train: int = 32, n_domain: int = 2048) -> Dataset:
    """Latent ``z ~ N(0, I_4)``, inputs ``x = tanh(A z + c)`` in R^16,
    binary labels ``y = [z0 * z1 > 0]`` depending on ``z`` only.

    ``n_train`` rows drawn by ``seed`` form the train split; the rest of the
    domain is the validation split.
    """
    s = RandomStream(0x5A34_5831)
    z = sample(DistSpec.gaussian(0, 1), 4 * n_domain, s.split("z")).reshape(n_domain, 4)
    d = hier_decoder()
    x = d(z)
    y = (z[:, 0] * z[:, 1] > 0).astype(np.float64)[:, None]
    split = np.full(n_domain, "val", dtype=object)
    split[RandomStream(seed).split("hier-train").permutation(n_domain)[:n_train]] = "train"
    return Dataset(x, y, split, z=z, full_domain=True, decoder=d, name="hier-z4x16-v1")


def lowvar_blobs(seed: int = 0, n_per_class: int = 200, dim: int = 3, spread: float = 0.05) -> Dataset:
    """Two tight gaussian classes (one-hot labels) around 0 and 1."""
    s = RandomStream(seed).split("lowvar-blobs")
    xs, ys = [], []
    for k in range(2):
        xs.append(k + sample(DistSpec.gaussian(0, spread), n_per_class * dim, s.split(k)).reshape(n_per_class, dim))
        ys.append(np.tile(np.eye(2)[k], (n_per_class, 1)))
    return Dataset(np.vstack(xs), np.vstack(ys), np.full(2 * n_per_class, "train", dtype=object), name="lowvar-blobs-v1")


def memo4() -> Dataset:
    """Four points; the two train rows have label 0, the unseen two have label 1."""
    x = np.arange(4.0)[:, None]
    y = np.array([[0.0], [0.0], [1.0], [1.0]])
    return Dataset(x, y, ["train", "train", "domain", "domain"], name="memo4-v1")


def _boolean_domain(n_bits: int, fn, train_rows, name: str) -> Dataset:
    x = np.array(list(itertools.product((0.0, 1.0), repeat=n_bits)))
    y = np.array([[float(fn(row))] for row in x.astype(int)])
    split = np.full(len(x), "domain", dtype=object)
    split[list(train_rows)] = "train"
    return Dataset(x, y, split, name=name)


def xor2() -> Dataset:
    return _boolean_domain(2, lambda r: r[0] ^ r[1], [0, 3], "xor2-v1")


def parity3() -> Dataset:
    return _boolean_domain(3, lambda r: r.sum() % 2, [0, 3, 5, 6], "parity3-v1")


def and4() -> Dataset:
    return _boolean_domain(4, lambda r: r.all(), [0, 1, 2, 4, 8], "and4-v1")


BUILTIN = {
    "linreg2d-v1": linreg2d,
    "hier-z4x16-v1": hier_z4x16,
    "lowvar-blobs-v1": lowvar_blobs,
    "memo4-v1": memo4,
    "xor2-v1": xor2,
    "parity3-v1": parity3,
    "and4-v1": and4,
}

TOY_DOMAINS = ("memo4-v1", "xor2-v1", "parity3-v1", "and4-v1")


def load_task(name: str, seed: int = 0, **params) -> Dataset:
    if name not in BUILTIN:
        raise KeyError(f"unknown task {name!r}; builtin tasks: {', '.join(sorted(BUILTIN))}")
    fn = BUILTIN[name]
    if name in TOY_DOMAINS:
        if params:
            raise TypeError(f"task {name} takes no parameters")
        return fn()
    return fn(seed=seed, **params)
