import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisereg import tasks, verify
from noisereg.augment import ADDITIVE, AugmentSpec, NoiseSpec
from noisereg.experiment import (
    Dataset,
    GapReport,
    Memorizer,
    Topology,
    TrainConfig,
    TrainingDiverged,
    gap_estimate,
    gap_exact,
    mean_loss,
    minibatch_gradient,
    sgd_step,
    train,
)
from noisereg.net import Activation, LayerParams, Loss, NetworkParams, ParamGradient, backward, init_network
from noisereg.numkit import DistSpec, RandomStream, ShapeError, sample
from noisereg.regularize import DropSpec, Granularity, PenaltySpec, network_penalty_grad


def one_layer(W, b, act="identity"):
    return NetworkParams((LayerParams(np.array(W, dtype=float), np.array(b, dtype=float), Activation(act)),))


def grad_of(W, b):
    return ParamGradient((np.array(W, dtype=float),), (np.array(b, dtype=float),))


def line_data(n=16):
    x = np.linspace(-1, 1, n)[:, None]
    return Dataset(x, 2 * x, ["train"] * n)


def test_sgd_step_examples():
    theta = one_layer([[1.0]], [1.0])
    out = sgd_step(theta, grad_of([[0.5]], [-0.5]), 0.1)
    assert out.flatten().tolist() == [0.95, 1.05]
    assert np.array_equal(sgd_step(theta, grad_of([[3.0]], [2.0]), 0.0).flatten(), theta.flatten())
    assert np.array_equal(sgd_step(theta, grad_of([[0.0]], [0.0]), 0.7).flatten(), theta.flatten())
    with pytest.raises(ShapeError):
        sgd_step(theta, grad_of([[1.0, 2.0]], [0.0]), 0.1)


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.floats(0, 1))
def test_sgd_step_affine_in_gradient(g, eta):
    theta = one_layer([[0.3, -1.2]], [0.7])
    g1, g2 = grad_of([g[:2]], [g[2]]), grad_of([g[2:]], [g[3]])
    one = sgd_step(theta, g1 + g2, eta).flatten()
    two = sgd_step(sgd_step(theta, g1, eta), g2, eta).flatten()
    assert np.all(np.abs(one - two) <= 1e-15 * (1 + np.abs(one)) * 8)


def test_minibatch_gradient_examples():
    p = init_network([3, 4, 2], ["tanh", "sigmoid"], RandomStream(0))
    s = RandomStream(1)
    X = sample(DistSpec.gaussian(), 24, s).reshape(8, 3)
    Y = sample(DistSpec.uniform(), 16, s).reshape(8, 2)
    single = minibatch_gradient(p, X[:1], Y[:1], Loss.BCE).flatten()
    assert np.array_equal(single, backward(p, X[0], Y[0], Loss.BCE).flatten())
    same = minibatch_gradient(p, np.repeat(X[:1], 5, 0), np.repeat(Y[:1], 5, 0), Loss.BCE).flatten()
    assert np.max(np.abs(same - single)) < 1e-15
    mean = np.mean([backward(p, X[i], Y[i], Loss.BCE).flatten() for i in range(8)], axis=0)
    assert np.max(np.abs(minibatch_gradient(p, X, Y, Loss.BCE).flatten() - mean)) < 1e-12
    with pytest.raises(ValueError):
        minibatch_gradient(p, np.zeros((0, 3)), np.zeros((0, 2)), Loss.BCE)


def test_minibatch_gradient_adds_penalty():
    p = init_network([2, 2], ["identity"], RandomStream(2))
    x, y = np.array([[0.5, -0.5]]), np.array([[1.0, 0.0]])
    spec = PenaltySpec("l2", 0.3)
    g = minibatch_gradient(p, x, y, Loss.MSE, penalty=spec).flatten()
    assert np.allclose(g, backward(p, x, y, Loss.MSE).flatten() + network_penalty_grad(p, spec), rtol=0, atol=1e-15)


def test_minibatch_gradient_drop_needs_stream():
    p = init_network([2, 2], ["identity"], RandomStream(2))
    with pytest.raises(ValueError):
        minibatch_gradient(p, np.eye(2), np.eye(2), Loss.MSE, drop=DropSpec(0.5))


def test_train_zero_epochs_returns_initialization():
    topo = Topology((1, 1), (Activation.IDENTITY,))
    res = train(TrainConfig(epochs=0, minibatch_size=4, seed=3), line_data(), topo)
    assert res.losses == []
    assert np.array_equal(res.params.flatten(), topo.init(RandomStream(3).split("init")).flatten())


def test_train_recovers_least_squares_slope():
    # closed form for y = 2x is w = 2, b = 0
    x = line_data().x
    w_ls = np.linalg.lstsq(np.hstack([x, np.ones_like(x)]), 2 * x[:, 0], rcond=None)[0]
    res = train(TrainConfig(eta=0.1, epochs=400, minibatch_size=4), line_data(), Topology((1, 1), (Activation.IDENTITY,)))
    assert abs(res.params.layers[0].W[0, 0] - w_ls[0]) < 1e-3
    assert res.losses[-1] < res.losses[0]


@pytest.mark.parametrize(
    "extra",
    [
        {},
        {"drop": DropSpec(0.7), "mask_granularity": "per_epoch"},
        {"drop": DropSpec(0.7, Granularity.WEIGHT)},
        {"augmentation": AugmentSpec("input", NoiseSpec(ADDITIVE, DistSpec.gaussian(0, 0.1)))},
        {"augmentation": AugmentSpec("input", NoiseSpec(ADDITIVE, DistSpec.gaussian(0, 0.1))), "presentation": "frozen"},
        {"sampling": "with_replacement", "penalty": PenaltySpec("l1", 0.01)},
    ],
)
def test_train_bit_deterministic(extra):
    cfg = TrainConfig(eta=0.05, epochs=15, minibatch_size=4, seed=11, **extra)
    topo = Topology((1, 3, 1), (Activation.TANH, Activation.IDENTITY))
    a, b = train(cfg, line_data(), topo), train(cfg, line_data(), topo)
    assert a.losses == b.losses
    assert np.array_equal(a.params.flatten(), b.params.flatten())


def test_train_rescales_dropout_layer():
    cfg = TrainConfig(eta=0.05, epochs=0, minibatch_size=4, drop=DropSpec(0.5, layer_index=1))
    topo = Topology((1, 3, 1), (Activation.TANH, Activation.IDENTITY))
    init = topo.init(RandomStream(0).split("init"))
    out = train(cfg, line_data(), topo).params
    assert np.array_equal(out.layers[0].W, init.layers[0].W)
    assert np.array_equal(out.layers[1].W, 0.5 * init.layers[1].W)


def test_train_divergence_guard():
    cfg = TrainConfig(eta=50.0, epochs=50, minibatch_size=4)
    with pytest.raises(TrainingDiverged) as err:
        train(cfg, line_data(), Topology((1, 1), (Activation.IDENTITY,)))
    assert "epoch" in str(err.value)


def test_train_rejects_oversized_minibatch():
    with pytest.raises(ValueError):
        train(TrainConfig(epochs=1, minibatch_size=100), line_data(), Topology((1, 1), (Activation.IDENTITY,)))


def test_frozen_set_size():
    # 4 originals plus 3 noisy copies each give 16 rows, so a 16-row minibatch fits
    aug = AugmentSpec("input", NoiseSpec(ADDITIVE, DistSpec.gaussian(0, 0.1)))
    topo = Topology((1, 1), (Activation.IDENTITY,))
    cfg = TrainConfig(epochs=1, minibatch_size=16, presentation="frozen", frozen_copies=3, augmentation=aug)
    assert len(train(cfg, line_data(4), topo).losses) == 1
    with pytest.raises(ValueError):
        train(TrainConfig(**{**cfg.__dict__, "keep_originals": False}), line_data(4), topo)


def test_gap_exact_examples():
    data = tasks.memo4()
    mem = Memorizer(*data.part("train")[::2])
    rep = gap_exact(mem, data, Loss.MSE)
    assert rep == GapReport(0.0, 0.5, 0.5, "exact")
    all_train = Dataset(data.x, data.y, ["train"] * 4, full_domain=True)
    assert gap_exact(Memorizer(data.x, data.y), all_train, Loss.MSE).gap == 0
    constant = Dataset(data.x, np.ones((4, 1)), ["train", "domain", "domain", "train"])
    assert gap_exact(one_layer([[0.0]], [1.0]), constant, Loss.MSE).gap == 0
    with pytest.raises(ValueError):
        gap_exact(mem, line_data(), Loss.MSE)


def test_memorizer_gap_equals_domain_loss_on_all_toy_domains():
    for name in tasks.TOY_DOMAINS:
        data = tasks.load_task(name)
        x_tr, _, y_tr = data.part("train")
        rep = gap_exact(Memorizer(x_tr, y_tr), data, Loss.MSE)
        assert rep.train_loss == 0
        # per-sample oracle: loss is (0 - y)^2 off the train rows, 0 on them
        seen = {r.tobytes() for r in x_tr}
        per = [0.0 if x.tobytes() in seen else float(y[0] ** 2) for x, y in zip(data.x, data.y)]
        assert abs(rep.gap - np.mean(per)) <= 1e-12


def test_gap_estimate_examples():
    data = tasks.xor2()
    split = ["train", "val", "val", "train"]
    model = one_layer([[0.3, -0.2]], [0.1])
    same = Dataset(np.vstack([data.x, data.x]), np.vstack([data.y, data.y]), ["train"] * 4 + ["val"] * 4)
    assert gap_estimate(model, same, Loss.MSE).gap == 0

    class Fixed:
        # per-sample losses 0.2 on train rows, 0.7 on val rows
        def predict(self, x):
            return np.sqrt(np.where(x[:, :1] == x[:, 1:], 0.2, 0.7))

    zeros = Dataset(data.x, np.zeros((4, 1)), split)
    assert gap_estimate(Fixed(), zeros, Loss.MSE).gap == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        gap_estimate(model, Dataset(data.x, data.y, ["train"] * 4), Loss.MSE)


def test_gap_estimate_converges_to_domain_loss():
    data = tasks.and4()
    x_tr, _, y_tr = data.part("train")
    model = Memorizer(x_tr, y_tr, default=[0.5])
    rest = [i for i in range(len(data)) if data.split[i] != "train"]
    target = mean_loss(model, data.x[rest], data.y[rest], Loss.MSE)
    diffs = []
    for k in range(1, len(rest) + 1):
        split = np.array(["train" if s == "train" else "domain" for s in data.split], dtype=object)
        split[rest[:k]] = "val"
        rep = gap_estimate(model, Dataset(data.x, data.y, split), Loss.MSE)
        diffs.append(abs(rep.eval_loss - target))
    assert diffs[-1] == 0
    assert max(diffs[len(diffs) // 2 :]) <= max(diffs)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.eye(2), np.eye(2), ["train", "test"])
    with pytest.raises(ShapeError):
        Dataset(np.eye(2), np.eye(3), ["train", "train"])
    d = Dataset(np.eye(3), np.eye(3), ["train", "val", "domain"])
    assert d.full_domain and d.count("domain") == 3 and d.count("val") == 1


def test_tasks_are_versioned_and_deterministic():
    a, b = tasks.load_task("hier-z4x16-v1", seed=2), tasks.load_task("hier-z4x16-v1", seed=2)
    assert np.array_equal(a.x, b.x) and list(a.split) == list(b.split)
    assert a.count("train") == 32 and len(a) == 2048 and a.full_domain
    assert np.array_equal(a.decoder(a.z), a.x)
    assert np.array_equal(a.y[:, 0], (a.z[:, 0] * a.z[:, 1] > 0).astype(float))
    c = tasks.load_task("hier-z4x16-v1", seed=3)
    assert np.array_equal(a.x, c.x) and list(a.split) != list(c.split)
    with pytest.raises(KeyError):
        tasks.load_task("linreg2d")
    with pytest.raises(TypeError):
        tasks.load_task("xor2-v1", n=3)


def test_bishop_examples():
    rep = verify.verify_bishop([1, 2], [1, 1], [0], 0.1, 10**5, RandomStream(0))
    assert rep.passed and rep.details["closed_form"] == pytest.approx(0.05)
    small = verify.verify_bishop([1, 2], [1, 1], [0], 1e-4, 10**5, RandomStream(1))
    assert small.passed and small.discrepancy < 1e-6
    zero = verify.verify_bishop([0, 0], [1, 1], [0], 0.1, 10**5, RandomStream(2))
    assert zero.passed and zero.details["closed_form"] == 0
    with pytest.raises(ValueError):
        verify.verify_bishop([1], [1], [0], 0.1, 999, RandomStream(0))
    with pytest.raises(ValueError):
        verify.verify_bishop([1], [1], [0], 0.0, 1000, RandomStream(0))


def test_bishop_closed_form_by_quadrature():
    # E[(w.(x+r) - t)^2] - (w.x - t)^2 = sigma^2 |w|^2 exactly; check with Gauss-Hermite nodes
    w, x, t, sigma = np.array([0.7, -1.3]), np.array([0.2, 0.9]), 0.4, 0.3
    nodes, weights = np.polynomial.hermite_e.hermegauss(10)
    weights = weights / weights.sum()
    excess = sum(
        wi * wj * ((w @ (x + sigma * np.array([ni, nj])) - t) ** 2)
        for ni, wi in zip(nodes, weights)
        for nj, wj in zip(nodes, weights)
    ) - (w @ x - t) ** 2
    assert excess == pytest.approx(sigma**2 * (w @ w), rel=1e-12)


def test_dropout_as_noise_examples():
    L = LayerParams(np.array([[1.0, -2.0, 0.5], [0.3, 0.3, -1.0]]), np.array([0.2, -0.1]), Activation.TANH)
    y = np.array([0.5, 1.5, -2.0])
    for p in (1.0, 0.0, 0.5):
        rep = verify.verify_dropout_as_noise(L, y, p, 10**4, RandomStream(3))
        assert rep.passed and rep.details["exact_failures"] == 0
    assert verify.verify_dropout_as_noise(L, y, 0.0, 100, RandomStream(4)).details["mean_preactivation"] == [0, 0]


def test_ridge_solution_matches_normal_equations():
    s = RandomStream(5)
    x = sample(DistSpec.gaussian(), 40, s).reshape(20, 2)
    y = x @ [1.0, -3.0] + 0.7 + sample(DistSpec.gaussian(0, 0.1), 20, s)
    alpha = 0.05
    w, b = verify.ridge_solution(x, y, alpha)
    # stationarity of mean((xw + b - y)^2) + alpha |w|^2
    r = x @ w + b - y
    assert np.allclose(2 * x.T @ r / 20 + 2 * alpha * w, 0, atol=1e-12)
    assert abs(2 * r.mean()) < 1e-12


def test_l2_vs_noise_training_examples():
    data = tasks.linreg2d()
    cfg = TrainConfig(eta=0.02, epochs=400, minibatch_size=16)
    zero = verify.verify_l2_vs_noise_training(data, 0.0, 0.0, cfg)
    assert zero.details["l2_vs_noise"] == 0
    ok = verify.verify_l2_vs_noise_training(data, 0.1, 0.01, cfg)
    assert ok.passed
    assert ok.details["l2_vs_ridge"] <= 0.05 and ok.details["noise_vs_ridge"] <= 0.05
    bad = verify.verify_l2_vs_noise_training(data, 0.1, 0.1, cfg)
    assert not bad.passed


def test_feature_noise_rejects_too_few_seeds():
    with pytest.raises(ValueError):
        verify.verify_feature_noise_regularizes(n_seeds=1)


def test_feature_noise_rejects_degenerate_labels():
    def flat(seed=0, n_train=32):
        d = tasks.hier_z4x16(seed, n_train)
        return Dataset(d.x, np.zeros_like(d.y), d.split, z=d.z, decoder=d.decoder)

    with pytest.raises(ValueError):
        verify.verify_feature_noise_regularizes(task=flat)


def test_zero_feature_noise_changes_nothing():
    # zero noise duplicates the originals, so both runs see identical data
    data = tasks.hier_z4x16(0)
    cfg = TrainConfig(eta=0.1, epochs=20, minibatch_size=8, loss=Loss.BCE)
    topo = Topology((16, 8, 1), (Activation.TANH, Activation.SIGMOID))
    spec = AugmentSpec("feature", NoiseSpec(ADDITIVE, DistSpec.gaussian(0, 0)), data.decoder)
    a = train(cfg, data, topo).params
    b = train(TrainConfig(eta=0.1, epochs=20, minibatch_size=8, loss=Loss.BCE, augmentation=spec), data, topo).params
    np.testing.assert_allclose(a.flatten(), b.flatten(), rtol=0, atol=1e-12)


def test_equivalence_report_pass_matches_tolerance():
    s = RandomStream(6)
    reps = [
        verify.verify_dropout_reduction(20, s.split(1)),
        verify.verify_gradients(10, s.split(2)),
        verify.verify_mask_count(4),
        verify.verify_memorizer_gap(),
        verify.verify_bishop([1, 2], [1, 1], [0], 0.1, 10**4, s.split(3)),
    ]
    for r in reps:
        assert r.passed == (r.discrepancy <= r.tolerance)
        assert set(r.to_dict()) >= {"claim", "discrepancy", "tolerance", "passed"}
