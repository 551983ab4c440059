"""Numerical checks that noise injection and explicit regularizers agree.

Each ``verify_*`` function returns an :class:`EquivalenceReport` with a
measured discrepancy, the tolerance it is held to and the verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import net, regularize, tasks
from .augment import ADDITIVE, AugmentSpec, NoiseSpec, noise_multiplicative, scheme_check
from .experiment import Dataset, Memorizer, Topology, TrainConfig, gap_estimate, gap_exact, train
from .net import Activation, LayerParams, Loss, NetworkParams
from .numkit import DistSpec, RandomStream, sample
from .regularize import PenaltySpec


@dataclass
class EquivalenceReport:
    claim: str
    discrepancy: float
    tolerance: float
    passed: bool
    n_samples: int = 0
    standard_error: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.discrepancy = float(self.discrepancy)
        self.tolerance = float(self.tolerance)
        self.passed = bool(self.passed)
        self.n_samples = int(self.n_samples)
        if self.standard_error is not None:
            self.standard_error = float(self.standard_error)

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "n_samples": self.n_samples,
            "standard_error": self.standard_error,
            "details": self.details,
        }


def random_layer(stream: RandomStream, max_dim: int = 6, activation=None) -> LayerParams:
    dims = stream.integers(max_dim, 2) + 1
    out_dim, in_dim = int(dims[0]), int(dims[1])
    W = sample(DistSpec.gaussian(0, 1), out_dim * in_dim, stream).reshape(out_dim, in_dim)
    b = sample(DistSpec.gaussian(0, 1), out_dim, stream)
    if activation is None:
        activation = list(Activation)[int(stream.integers(len(Activation), 1)[0])]
    return LayerParams(W, b, activation)


def random_network(stream: RandomStream, kind: Loss, max_width: int = 6, max_depth: int = 3) -> NetworkParams:
    """Random dense net; BCE nets end in a sigmoid so predictions are probabilities."""
    depth = int(stream.integers(max_depth, 1)[0]) + 1
    widths = (stream.integers(max_width, depth + 1) + 1).tolist()
    kinds = list(Activation)
    layers = []
    for k in range(depth):
        act = kinds[int(stream.integers(len(kinds), 1)[0])]
        if k == depth - 1 and kind is Loss.BCE:
            act = Activation.SIGMOID
        W = sample(DistSpec.gaussian(0, 1 / math.sqrt(widths[k])), widths[k] * widths[k + 1], stream)
        b = sample(DistSpec.gaussian(0, 0.5), widths[k + 1], stream)
        layers.append(LayerParams(W.reshape(widths[k + 1], widths[k]), b, act))
    return NetworkParams(tuple(layers))


def verify_dropout_reduction(n_cases: int, stream: RandomStream, max_dim: int = 6) -> EquivalenceReport:
    """Dropout equals DropConnect with the embedded neuron mask, bit for bit."""
    mismatches = 0
    for k in range(n_cases):
        s = stream.split(k)
        layer = random_layer(s, max_dim)
        y = sample(DistSpec.gaussian(0, 1), layer.in_dim, s)
        p = float(s.uniform01(1)[0])
        r = regularize.sample_neuron_mask(p, layer.in_dim, s)
        a = regularize.dropout_forward(layer, y, r)
        b = regularize.dropconnect_forward(
            regularize.augment_layer(layer),
            regularize.augment_input(y),
            regularize.embed_neuron_mask(r, layer.out_dim),
            layer.activation,
        )
        mismatches += int(not np.array_equal(a, b))
    return EquivalenceReport("dropout_equals_diagonal_dropconnect", float(mismatches), 0.0, mismatches == 0, n_cases)


def verify_gradients(n_nets: int, stream: RandomStream, tol: float = 1e-5) -> EquivalenceReport:
    """Backpropagation against central finite differences on random nets."""
    worst = 0.0
    for k in range(n_nets):
        s = stream.split(k)
        kind = Loss.MSE if k % 2 == 0 else Loss.BCE
        params = random_network(s, kind)
        x = sample(DistSpec.gaussian(0, 1), params.in_dim, s)
        t = sample(DistSpec.uniform(0, 1), params.out_dim, s)
        worst = max(worst, net.grad_check(params, x, t, kind))
    return EquivalenceReport("backprop_matches_finite_differences", worst, tol, worst < tol, n_nets)


def verify_mask_count(max_units: int = 4) -> EquivalenceReport:
    """Enumerated distinct neuron masks number exactly ``2**n``."""
    counts = {}
    for n in range(max_units + 1):
        distinct = {m.tobytes() for m in regularize.enumerate_masks(n)}
        counts[n] = (len(distinct), regularize.count_mask_patterns(n))
    bad = sum(a != b for a, b in counts.values())
    return EquivalenceReport(
        "thinned_network_count", float(bad), 0.0, bad == 0, max_units + 1,
        details={str(n): {"enumerated": a, "formula": b} for n, (a, b) in counts.items()},
    )


def verify_bishop(w, x, t, sigma: float, n_mc: int, stream: RandomStream) -> EquivalenceReport:
    """Input noise on a linear MSE model adds ``sigma**2 * ||w||**2`` to the expected loss.

    Monte Carlo estimate of ``E[L(w, x + r)] - L(w, x)`` with
    ``r ~ N(0, sigma**2 I)``; passes within 3 standard errors.
    """
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(1)
    if n_mc < 1000:
        raise ValueError("verify_bishop needs n_mc >= 1000")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    r = sample(DistSpec.gaussian(0, sigma), n_mc * len(w), stream).reshape(n_mc, len(w))
    clean = net.loss_per_sample(Loss.MSE, np.array([w @ x]), t)
    noisy = net.loss_per_sample(Loss.MSE, ((x + r) @ w)[:, None], t[None, :])
    excess = noisy - clean
    estimate = float(excess.mean())
    se = float(excess.std(ddof=1) / math.sqrt(n_mc))
    closed = sigma**2 * float(w @ w)
    disc = abs(estimate - closed)
    return EquivalenceReport(
        "input_noise_equals_tikhonov", disc, 3 * se, disc <= 3 * se, n_mc, se,
        details={"estimate": estimate, "closed_form": closed, "sigma": sigma},
    )


def verify_dropout_as_noise(layer: LayerParams, y_prev, p: float, n_trials: int, stream: RandomStream, n_se: float = 4.0):
    """Input Dropout is multiplicative Bernoulli noise.

    (a) With the same mask draw, ``dropout_forward`` equals
    ``layer_forward`` on ``noise_multiplicative(y, r)`` exactly, every trial.
    (b) For the layer's weights with identity activation and zero bias,
    the trial-mean pre-activation lies within ``n_se`` standard errors of
    ``p * W @ y``. The reported discrepancy is the worst deviation in
    standard-error units.
    """
    y = np.asarray(y_prev, dtype=np.float64)
    masks = np.array([regularize.sample_neuron_mask(p, len(y), stream) for _ in range(n_trials)])
    failures = 0
    for r in masks:
        a = regularize.dropout_forward(layer, y, r)
        b = net.layer_forward(layer, noise_multiplicative(y, r))
        failures += int(not np.array_equal(a, b))
    linear = LayerParams(layer.W, np.zeros(layer.out_dim), Activation.IDENTITY)
    pre = net.layer_forward(linear, masks * y)
    expected = p * net.layer_forward(linear, y)
    dev = np.abs(pre.mean(axis=0) - expected)
    se = pre.std(axis=0, ddof=1) / math.sqrt(n_trials) if n_trials > 1 else np.zeros_like(dev)
    slack = 1e-12 * (1.0 + np.abs(expected))
    z = np.where(dev <= slack, 0.0, np.divide(dev, se, out=np.full_like(dev, np.inf), where=se > 0))
    worst = float(z.max()) if len(z) else 0.0
    return EquivalenceReport(
        "dropout_is_bernoulli_multiplicative_noise", worst, n_se, failures == 0 and worst <= n_se, n_trials,
        float(se.max()) if len(se) else 0.0,
        details={"exact_failures": failures, "mean_preactivation": pre.mean(axis=0).tolist(), "expected": expected.tolist()},
    )


def ridge_solution(x, y, alpha: float, fit_intercept: bool = True):
    """Minimizer of ``mean((x w + b - y)**2) + alpha ||w||**2`` (intercept unpenalized).

    Setting the gradient to zero gives ``(X'X + alpha n I) w = X'(y - b)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(len(x))
    n, d = x.shape
    if fit_intercept:
        X = np.hstack([x, np.ones((n, 1))])
        reg = np.diag(np.append(np.full(d, alpha * n), 0.0))
        sol = np.linalg.solve(X.T @ X + reg, X.T @ y)
        return sol[:d], float(sol[d])
    return np.linalg.solve(x.T @ x + alpha * n * np.eye(d), x.T @ y), 0.0


def verify_l2_vs_noise_training(
    data: Dataset, sigma: float, alpha: float, config: TrainConfig, tolerance: float = 0.05
) -> EquivalenceReport:
    """Train a linear MSE model twice and compare the final weights.

    Run (a) uses an L2 weight penalty ``alpha`` on clean data; run (b) adds
    fresh ``N(0, sigma**2)`` noise to every input presentation with no
    penalty. Distances are ``max|u - v| / max|w_ridge|`` where ``w_ridge``
    is the closed-form ridge solution at ``sigma**2``; the discrepancy is
    the largest of the three pairwise distances among ``w_a``, ``w_b`` and
    ``w_ridge``.
    """
    x, _, y = data.part("train")
    topo = Topology((x.shape[1], 1), (Activation.IDENTITY,))
    base = replace(config, loss=Loss.MSE, penalty=None, augmentation=None, drop=None)
    run_l2 = train(replace(base, penalty=PenaltySpec("l2", alpha, include_biases=False)), data, topo)
    noise = AugmentSpec("input", NoiseSpec(ADDITIVE, DistSpec.gaussian(0, sigma)))
    run_noise = train(replace(base, augmentation=noise, presentation="fresh"), data, topo)
    w_l2 = run_l2.params.layers[0].W[0]
    w_noise = run_noise.params.layers[0].W[0]
    w_ridge, b_ridge = ridge_solution(x, y, sigma**2)
    scale = max(float(np.max(np.abs(w_ridge))), 1e-300)
    rel = lambda a, b: float(np.max(np.abs(a - b)) / scale)  # noqa: E731
    pairs = {"l2_vs_noise": rel(w_l2, w_noise), "l2_vs_ridge": rel(w_l2, w_ridge), "noise_vs_ridge": rel(w_noise, w_ridge)}
    disc = max(pairs.values())
    return EquivalenceReport(
        "noise_training_equals_l2", disc, tolerance, disc <= tolerance, len(x),
        details={
            "sigma": sigma,
            "alpha": alpha,
            "w_l2": w_l2.tolist(),
            "w_noise": w_noise.tolist(),
            "w_ridge": w_ridge.tolist(),
            "b_ridge": b_ridge,
            **pairs,
        },
    )


def verify_memorizer_gap(names=tasks.TOY_DOMAINS, tol: float = 1e-12) -> EquivalenceReport:
    """Lookup memorizer: exact gap equals the mean full-domain loss."""
    worst, details = 0.0, {}
    for name in names:
        data = tasks.load_task(name)
        x_tr, _, y_tr = data.part("train")
        model = Memorizer(x_tr, y_tr)
        report = gap_exact(model, data, Loss.MSE)
        disc = abs(report.gap - report.eval_loss)
        details[name] = {"gap": report.gap, "domain_loss": report.eval_loss, "train_loss": report.train_loss}
        worst = max(worst, disc)
    return EquivalenceReport("memorizer_gap_is_domain_loss", worst, tol, worst <= tol, len(names), details=details)


def scheme_calibration(n_seeds: int = 100, n_samples: int = 400, shift_sigma: float = 10.0):
    """Pass counts of the moment check on three generators over seeded blob tasks.

    Returns a dict with counts for the identity generator (expected to
    pass), a ``+shift`` mean shift (expected to fail) and additive
    ``N(0, 1)`` noise (expected to fail the covariance check).
    """
    identity = AugmentSpec("input", NoiseSpec(ADDITIVE, DistSpec.gaussian(0, 0)))
    shift = AugmentSpec("input", NoiseSpec(ADDITIVE, DistSpec.uniform(shift_sigma, shift_sigma)))
    wide = AugmentSpec("input", NoiseSpec(ADDITIVE, DistSpec.gaussian(0, 1)))
    counts = {"identity_pass": 0, "shift_fail": 0, "noise_cov_fail": 0, "n_seeds": n_seeds}
    for seed in range(n_seeds):
        data = tasks.lowvar_blobs(seed)
        s = RandomStream(seed)
        counts["identity_pass"] += scheme_check(data.x, data.y, identity, n_samples, s.split("id")).passed
        counts["shift_fail"] += not scheme_check(data.x, data.y, shift, n_samples, s.split("shift")).passed
        counts["noise_cov_fail"] += not scheme_check(data.x, data.y, wide, n_samples, s.split("wide")).cov_ok
    return counts


def verify_scheme_check(n_seeds: int = 100) -> EquivalenceReport:
    c = scheme_calibration(n_seeds)
    need = {"identity_pass": n_seeds, "shift_fail": math.ceil(0.99 * n_seeds), "noise_cov_fail": math.ceil(0.95 * n_seeds)}
    short = max(need[k] - c[k] for k in need)
    return EquivalenceReport("scheme_check_calibration", float(max(short, 0)), 0.0, short <= 0, n_seeds, details=c)


@dataclass(frozen=True)
class FeatureNoiseSetup:
    """Configuration of the feature-noise experiment on ``hier-z4x16-v1``."""

    hidden: int = 32
    activation: Activation = Activation.TANH
    noise: NoiseSpec = NoiseSpec(ADDITIVE, DistSpec.gaussian(0, 0.3))
    config: TrainConfig = TrainConfig(eta=0.1, epochs=300, minibatch_size=8, loss=Loss.BCE)
    n_train: int = 32


def verify_feature_noise_regularizes(
    n_seeds: int = 10, setup: FeatureNoiseSetup = FeatureNoiseSetup(), task=tasks.hier_z4x16, min_win_fraction: float = 0.8
) -> EquivalenceReport:
    """Feature-space noise shrinks the generalization gap of a small-data model.

    Per seed, a baseline and a feature-noise model are trained on the same
    train split with the same initialization, and their validation gaps
    compared. Passes iff the augmented mean gap is smaller and the
    augmented model wins at least ``min_win_fraction`` of the seeds.
    """
    if n_seeds < 10:
        raise ValueError("feature-noise verification needs at least 10 seeds")
    base_gaps, aug_gaps = [], []
    for seed in range(n_seeds):
        data = task(seed=seed, n_train=setup.n_train)
        if np.all(data.y == data.y[0]):
            raise ValueError("degenerate task: labels have zero variance")
        if data.z is None or data.decoder is None:
            raise ValueError("feature-noise verification needs a task with features and a decoder")
        cfg = replace(setup.config, seed=seed, augmentation=None)
        out = Activation.SIGMOID if cfg.loss is Loss.BCE else Activation.IDENTITY
        topo = Topology((data.x.shape[1], setup.hidden, data.y.shape[1]), (setup.activation, out))
        spec = AugmentSpec("feature", setup.noise, data.decoder)
        base = train(cfg, data, topo).params
        aug = train(replace(cfg, augmentation=spec, presentation="fresh"), data, topo).params
        base_gaps.append(gap_estimate(base, data, cfg.loss).gap)
        aug_gaps.append(gap_estimate(aug, data, cfg.loss).gap)
    base_gaps, aug_gaps = np.array(base_gaps), np.array(aug_gaps)
    wins = int(np.sum(aug_gaps < base_gaps))
    need = math.ceil(min_win_fraction * n_seeds)
    margin = float(base_gaps.mean() - aug_gaps.mean())
    return EquivalenceReport(
        "feature_noise_reduces_gap",
        float(aug_gaps.mean()),
        float(base_gaps.mean()),
        bool(aug_gaps.mean() < base_gaps.mean() and wins >= need),
        n_seeds,
        details={
            "baseline_gaps": base_gaps.tolist(),
            "augmented_gaps": aug_gaps.tolist(),
            "wins": wins,
            "wins_needed": need,
            "margin": margin,
            "noise": str(setup.noise),
        },
    )
