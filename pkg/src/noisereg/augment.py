"""Artificial data from noise: on inputs, on labels, or on latent features.

Noise enters either additively (``x + r``) or multiplicatively
(``r * x``). Feature-space noise perturbs a latent vector ``z`` and maps
the result through a known :class:`Decoder` into input space. The
decoder families are fixed and serializable: identity, affine, affine
followed by an activation, and compositions of those.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .net import Activation
from .numkit import DistSpec, RandomStream, ShapeError, as_mat, as_vec, hadamard, matvec, sample

ADDITIVE = "additive"
MULTIPLICATIVE = "multiplicative"
TARGETS = ("input", "feature", "label")


@dataclass(frozen=True)
class NoiseSpec:
    mode: str
    dist: DistSpec

    def __post_init__(self):
        if self.mode not in (ADDITIVE, MULTIPLICATIVE):
            raise ValueError(f"noise mode must be 'additive' or 'multiplicative', got {self.mode!r}")
        if self.mode == MULTIPLICATIVE and self.dist.kind == "gaussian" and self.dist.a != 1.0:
            warnings.warn(
                f"multiplicative gaussian noise with mean {self.dist.a} shifts E[x_hat] away from x",
                stacklevel=3,
            )

    def apply(self, x, r):
        return noise_additive(x, r) if self.mode == ADDITIVE else noise_multiplicative(x, r)

    def __str__(self):
        return f"{self.mode}:{self.dist}"


@dataclass(frozen=True)
class Decoder:
    """Deterministic map from feature vectors to input vectors.

    Build with :meth:`identity`, :meth:`linear`, :meth:`linear_nonlinear`
    or :meth:`composed`.
    """

    kind: str
    feature_dim: int
    input_dim: int
    A: np.ndarray | None = None
    c: np.ndarray | None = None
    activation: Activation = Activation.IDENTITY
    parts: tuple = ()

    @classmethod
    def identity(cls, dim: int) -> "Decoder":
        return cls("identity", int(dim), int(dim))

    @classmethod
    def linear(cls, A, c=None) -> "Decoder":
        A = as_mat(A)
        c = np.zeros(A.shape[0]) if c is None else as_vec(c)
        if len(c) != A.shape[0]:
            raise ShapeError(f"offset length {len(c)} != decoder rows {A.shape[0]}")
        return cls("linear", A.shape[1], A.shape[0], A, c)

    @classmethod
    def linear_nonlinear(cls, A, c=None, activation=Activation.TANH) -> "Decoder":
        lin = cls.linear(A, c)
        return cls("linear_nonlinear", lin.feature_dim, lin.input_dim, lin.A, lin.c, Activation(activation))

    @classmethod
    def composed(cls, *parts: "Decoder") -> "Decoder":
        if not parts:
            raise ValueError("a composed decoder needs at least one part")
        for a, b in zip(parts, parts[1:]):
            if a.input_dim != b.feature_dim:
                raise ShapeError(f"decoder output {a.input_dim} does not feed next decoder input {b.feature_dim}")
        return cls("composed", parts[0].feature_dim, parts[-1].input_dim, parts=tuple(parts))

    def __call__(self, z):
        return decode(self, z)

    def to_dict(self) -> dict:
        if self.kind == "identity":
            return {"kind": "identity", "dim": self.feature_dim}
        if self.kind == "composed":
            return {"kind": "composed", "parts": [p.to_dict() for p in self.parts]}
        out = {"kind": self.kind, "A": self.A.tolist(), "c": self.c.tolist()}
        if self.kind == "linear_nonlinear":
            out["activation"] = self.activation.value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Decoder":
        kind = d["kind"]
        if kind == "identity":
            return cls.identity(d["dim"])
        if kind == "linear":
            return cls.linear(d["A"], d.get("c"))
        if kind == "linear_nonlinear":
            return cls.linear_nonlinear(d["A"], d.get("c"), d.get("activation", "tanh"))
        if kind == "composed":
            return cls.composed(*(cls.from_dict(p) for p in d["parts"]))
        raise ValueError(f"unknown decoder kind {kind!r}")


def decode(d: Decoder, z_hat) -> np.ndarray:
    """Image of ``z_hat`` (a vector, or a batch of rows) under ``d``."""
    z = np.asarray(z_hat, dtype=np.float64)
    if z.ndim not in (1, 2) or z.shape[-1] != d.feature_dim:
        raise ShapeError(f"decoder expects {d.feature_dim} features, got shape {z.shape}")
    if d.kind == "identity":
        return z.copy()
    if d.kind == "composed":
        for part in d.parts:
            z = decode(part, z)
        return z
    x = matvec(d.A, z) + d.c
    return d.activation(x) if d.kind == "linear_nonlinear" else x


def noise_additive(x, r) -> np.ndarray:
    x, r = np.asarray(x, dtype=np.float64), np.asarray(r, dtype=np.float64)
    if x.shape != r.shape:
        raise ShapeError(f"length mismatch: {x.shape} != {r.shape}")
    return x + r


def noise_multiplicative(x, r) -> np.ndarray:
    x, r = np.asarray(x, dtype=np.float64), np.asarray(r, dtype=np.float64)
    if x.ndim == 1 and r.ndim == 1:
        return hadamard(r, x)
    if x.shape != r.shape:
        raise ShapeError(f"length mismatch: {x.shape} != {r.shape}")
    return r * x


@dataclass(frozen=True)
class AugmentedSample:
    x_hat: np.ndarray
    origin_index: int
    provenance: str
    y: np.ndarray | None = None


def _feature_sample(z, noise: NoiseSpec, d: Decoder, stream: RandomStream) -> AugmentedSample:
    z = as_vec(z)
    r = sample(noise.dist, len(z), stream)
    return AugmentedSample(decode(d, noise.apply(z, r)), -1, f"feature:{noise}")


def augment_feature_additive(z, noise_dist: DistSpec, d: Decoder, stream: RandomStream) -> AugmentedSample:
    """``x_hat = d(z + r)``, ``r`` drawn from ``noise_dist``."""
    return _feature_sample(z, NoiseSpec(ADDITIVE, noise_dist), d, stream)


def augment_feature_multiplicative(z, noise_dist: DistSpec, d: Decoder, stream: RandomStream) -> AugmentedSample:
    """``x_hat = d(r * z)``; Bernoulli ``r`` gives Dropout on the features."""
    return _feature_sample(z, NoiseSpec(MULTIPLICATIVE, noise_dist), d, stream)


def label_smooth(y, epsilon: float) -> np.ndarray:
    """``(1 - eps) * y + eps / K`` for a K-class probability vector ``y``."""
    y = as_vec(y)
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if len(y) < 2:
        raise ValueError("label smoothing needs at least two classes")
    if abs(y.sum() - 1.0) > 1e-9 or np.any(y < 0):
        raise ValueError("label vector must be a probability vector summing to 1")
    return (1.0 - epsilon) * y + epsilon / len(y)


@dataclass(frozen=True)
class AugmentSpec:
    """What to perturb and how.

    ``target`` is ``"input"``, ``"feature"`` (needs ``decoder`` and the
    dataset's feature block) or ``"label"``. For labels, a non-``None``
    ``label_epsilon`` selects label smoothing instead of ``noise``.
    """

    target: str
    noise: NoiseSpec | None = None
    decoder: Decoder | None = None
    label_epsilon: float | None = None

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"augmentation target must be one of {TARGETS}, got {self.target!r}")
        if self.target == "feature" and self.decoder is None:
            raise ValueError("feature-space augmentation needs a decoder")
        if self.noise is None and not (self.target == "label" and self.label_epsilon is not None):
            raise ValueError(f"{self.target} augmentation needs a noise spec")

    def describe(self) -> str:
        if self.target == "label" and self.label_epsilon is not None:
            return f"label:smooth({self.label_epsilon!r})"
        return f"{self.target}:{self.noise}"

    def apply(self, x, z, y, stream: RandomStream):
        """Perturb a batch (rows are samples); returns new ``(x, y)``."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.target == "input":
            r = sample(self.noise.dist, x.size, stream).reshape(x.shape)
            return self.noise.apply(x, r), y
        if self.target == "feature":
            if z is None:
                raise ValueError("feature-space augmentation needs a feature block for every sample")
            z = np.asarray(z, dtype=np.float64)
            r = sample(self.noise.dist, z.size, stream).reshape(z.shape)
            return decode(self.decoder, self.noise.apply(z, r)), y
        if self.label_epsilon is not None:
            return x, np.array([label_smooth(row, self.label_epsilon) for row in np.atleast_2d(y)]).reshape(y.shape)
        r = sample(self.noise.dist, y.size, stream).reshape(y.shape)
        return x, self.noise.apply(y, r)


def generate_batch(x, y, spec: AugmentSpec, count: int, stream: RandomStream, z=None) -> list:
    """``count`` augmented samples cycling through the originals in order.

    Sample ``k`` derives from original ``k mod n``; its noise comes from
    ``stream.split(k)``, so the output does not depend on how the work is
    scheduled.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    n = len(x)
    if spec.target == "feature" and z is None:
        raise ValueError("feature-space augmentation needs a feature block for every sample")
    if count and n == 0:
        raise ValueError("cannot augment an empty dataset")
    out = []
    for k in range(int(count)):
        i = k % n
        zi = None if z is None else np.asarray(z, dtype=np.float64)[i : i + 1]
        xh, yh = spec.apply(x[i : i + 1], zi, y[i : i + 1], stream.split(k))
        out.append(AugmentedSample(xh[0], i, spec.describe(), yh[0]))
    return out


@dataclass
class SchemeCheckReport:
    """Per-class moment check of augmented data against the originals.

    A passing report means first and second moments match within
    tolerance; it does not establish distribution equality.
    """

    mean_discrepancy: dict = field(default_factory=dict)
    cov_discrepancy: dict = field(default_factory=dict)
    tol_mean: dict = field(default_factory=dict)
    tol_cov: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    passed: bool = True
    method: str = "moment check"

    @property
    def mean_ok(self) -> bool:
        return all(self.mean_discrepancy[c] <= self.tol_mean[c] for c in self.mean_discrepancy)

    @property
    def cov_ok(self) -> bool:
        return all(self.cov_discrepancy[c] <= self.tol_cov[c] for c in self.cov_discrepancy)


def _moment_se(X: np.ndarray):
    """Standard errors of the sample mean and of each sample covariance entry."""
    n = len(X)
    dev = X - X.mean(axis=0)
    prod = dev[:, :, None] * dev[:, None, :]
    se_mean = np.sqrt(dev.var(axis=0) / n)
    se_cov = np.sqrt(prod.var(axis=0) / n)
    return se_mean, se_cov, np.cov(X, rowvar=False, bias=True).reshape(X.shape[1], X.shape[1])


def _class_keys(y: np.ndarray):
    keys = {}
    for i, row in enumerate(y):
        keys.setdefault(tuple(row.tolist()), []).append(i)
    return keys


def scheme_check(
    x, y, spec: AugmentSpec, n_samples: int, stream: RandomStream, z=None, tol_mean=None, tol_cov=None, n_se=4.0
) -> SchemeCheckReport:
    """Compare class-conditional mean and covariance of augmented vs original data.

    For each class, ``n_samples`` augmented inputs are generated from that
    class's originals and their mean vector and covariance matrix are
    compared with the originals'. Discrepancies are max-abs entrywise
    differences. Unless given, each tolerance is ``n_se`` times the
    largest two-sample standard error of the corresponding estimator.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if n_samples < 100:
        raise ValueError("scheme check needs at least 100 augmented samples per class")
    if len(x) == 0:
        raise ValueError("scheme check needs a nonempty dataset")
    report = SchemeCheckReport()
    for key, idx in sorted(_class_keys(y).items()):
        idx = np.asarray(idx)
        zc = None if z is None else np.asarray(z, dtype=np.float64)[idx]
        batch = generate_batch(x[idx], y[idx], spec, n_samples, stream.split(("class",) + key), z=zc)
        aug = np.array([s.x_hat for s in batch])
        orig = x[idx]
        se_m_o, se_c_o, cov_o = _moment_se(orig)
        se_m_a, se_c_a, cov_a = _moment_se(aug)
        label = ",".join(repr(v) for v in key)
        report.mean_discrepancy[label] = float(np.max(np.abs(aug.mean(axis=0) - orig.mean(axis=0))))
        report.cov_discrepancy[label] = float(np.max(np.abs(cov_a - cov_o)))
        report.tol_mean[label] = float(tol_mean if tol_mean is not None else n_se * np.max(np.hypot(se_m_o, se_m_a)))
        report.tol_cov[label] = float(tol_cov if tol_cov is not None else n_se * np.max(np.hypot(se_c_o, se_c_a)))
        report.counts[label] = {"original": int(len(orig)), "augmented": int(len(aug))}
    report.passed = report.mean_ok and report.cov_ok
    return report
