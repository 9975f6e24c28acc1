import math

import numpy as np
import pytest

from _fd import central_diff, fd_param_grad, random_case, rel_norm_err
from fkcontrol import _accel
from fkcontrol.errors import DimensionError, ParameterError, TrainingDiverged
from fkcontrol.regression import (DesirabilityModel, Featurizer, MlpParams, TrainConfig, fit_mlp, init_params,
                                  mlp_forward, mlp_grad_input, mlp_grad_params, num_params, step_sizes, train,
                                  zero_params)
from fkcontrol.sampler import Dataset


def test_forward_examples():
    assert mlp_forward(zero_params((3, 32, 32, 1)), np.ones(3)) == 0.5
    p = zero_params((2, 4, 1))
    p.biases[-1][:] = 50.0
    assert abs(1.0 - mlp_forward(p, np.array([0.3, 0.1]))) < 1e-20
    one = MlpParams((1, 1), [np.array([[1.0]])], [np.array([0.0])])
    assert mlp_forward(one, np.zeros(1)) == 0.5
    assert mlp_forward(one, np.array([2.0])) == pytest.approx(1 / (1 + math.exp(-2.0)), rel=1e-15)


def test_output_strictly_inside_unit_interval():
    p = init_params((2, 16, 16, 1), seed=3)
    X = np.random.default_rng(0).normal(scale=5.0, size=(500, 2))
    psi = mlp_forward(p, X)
    assert psi.shape == (500,) and np.all((psi > 0) & (psi < 1))


def test_dimension_errors():
    p = init_params((3, 4, 1))
    with pytest.raises(DimensionError):
        mlp_forward(p, np.ones(2))
    with pytest.raises(DimensionError):
        mlp_grad_input(p, np.ones((5, 4)))
    with pytest.raises(DimensionError):
        mlp_grad_params(p, np.ones((2, 3)), 0.5)
    with pytest.raises(DimensionError):
        MlpParams((2, 3), [np.zeros((2, 3))], [np.zeros(3)])


def test_flat_round_trip():
    p = init_params((3, 5, 4, 1), seed=1)
    assert p.flat().size == num_params((3, 5, 4, 1)) == 3 * 5 + 5 + 5 * 4 + 4 + 4 + 1
    q = MlpParams.from_flat(p.layer_dims, p.flat())
    assert all(np.array_equal(a, b) for a, b in zip(p.weights, q.weights))


def test_glorot_bounds():
    p = init_params((3, 32, 32, 1), seed=0)
    for W in p.weights:
        a = math.sqrt(6.0 / sum(W.shape))
        assert np.all(np.abs(W) <= a) and np.abs(W).max() > 0.8 * a
    assert all(np.all(b == 0) for b in p.biases)


def test_param_grad_zero_at_target():
    p = init_params((2, 8, 1), seed=2)
    x = np.array([0.4, -1.0])
    g = mlp_grad_params(p, x, mlp_forward(p, x))
    assert np.all(g.flat() == 0.0)


def test_param_grad_linear_in_residual():
    p = init_params((2, 8, 8, 1), seed=2)
    x = np.array([0.4, -1.0])
    psi = mlp_forward(p, x)
    g1 = mlp_grad_params(p, x, psi - 0.1).flat()
    g2 = mlp_grad_params(p, x, psi - 0.2).flat()
    assert np.allclose(g2, 2 * g1, rtol=1e-12, atol=0)


@pytest.mark.parametrize("seed", range(10))
def test_param_grad_matches_fd(seed):
    params, x, target = random_case(np.random.default_rng(seed))
    g = mlp_grad_params(params, x, target).flat()
    assert rel_norm_err(g, fd_param_grad(params, x, target)) < 1e-5


def test_input_grad_examples():
    p = init_params((3, 6, 1), seed=0)
    p.weights[0][:] = 0.0
    assert np.all(mlp_grad_input(p, np.array([1.0, 2.0, 3.0])) == 0.0)
    lin = MlpParams((2, 1), [np.array([[1.0], [2.0]])], [np.zeros(1)])
    assert np.allclose(mlp_grad_input(lin, np.zeros(2)), [0.25, 0.5], rtol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_input_grad_matches_fd(seed):
    params, x, _ = random_case(np.random.default_rng(100 + seed))
    g = mlp_grad_input(params, x)
    assert rel_norm_err(g, central_diff(lambda z: mlp_forward(params, z), x)) < 1e-5


@pytest.mark.parametrize("angle_axes", [(), (0,)])
def test_raw_state_gradient_through_features(angle_axes):
    rng = np.random.default_rng(7)
    X = rng.uniform(-3, 3, size=(200, 2))
    feat = Featurizer(2, angle_axes).fit(X)
    params = init_params((feat.num_features, 16, 16, 1), seed=4)
    model = DesirabilityModel(params, feat)
    for x in X[:10]:
        g = model.grad(x)
        fd = central_diff(lambda z: float(model.value(z)[0]), x)
        assert rel_norm_err(g, fd) < 1e-5


def test_featurizer_periodic():
    feat = Featurizer(2, (0,))
    assert feat.names == ["cos(x1)", "sin(x1)", "x2"]
    a = feat(np.array([[0.5, 1.0]]))
    b = feat(np.array([[0.5 + 2 * math.pi, 1.0]]))
    assert np.allclose(a, b, atol=1e-14)


def _dataset(X, y, **meta):
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    return Dataset(X, np.asarray(y, dtype=float), np.ones(len(y), dtype=np.int64), meta)


def test_constant_half_targets_stay_at_zero_loss(backend):
    X = np.linspace(-1, 1, 64)
    ds = _dataset(X, np.full(64, 0.5))
    cfg = TrainConfig(epochs=20, batch_size=16, hidden=(8,))
    model, rep = train(ds, cfg, init=zero_params((1, 8, 1)))
    assert np.all(rep.losses == 0.0)


def test_smoke_fit_gaussian_bump(backend):
    x = np.linspace(-2, 2, 200)
    ds = _dataset(x, np.exp(-x ** 2))
    model, rep = train(ds, TrainConfig())
    assert rep.final_loss < 1e-3
    assert len(rep.losses) == 1001 and np.all(np.isfinite(rep.grad_norms))
    # trailing 100-epoch means go down
    means = rep.losses[1:].reshape(10, 100).mean(axis=1)
    assert means[-1] < means[0]
    assert np.sum(np.diff(means) <= 0) >= 7


def test_training_is_deterministic(backend):
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, size=(300, 2))
    ds = _dataset(X, 1 / (1 + np.sum(X ** 2, axis=1)))
    cfg = TrainConfig(epochs=15, batch_size=32, seed=5, hidden=(8, 8))
    a, _ = train(ds, cfg)
    b, _ = train(ds, cfg)
    assert np.array_equal(a.params.flat(), b.params.flat())
    c, _ = train(ds, TrainConfig(epochs=15, batch_size=32, seed=6, hidden=(8, 8)))
    assert not np.array_equal(a.params.flat(), c.params.flat())


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_backends_train_alike():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(200, 3))
    y = np.exp(-np.sum(X ** 2, axis=1))
    cfg = TrainConfig(epochs=10, batch_size=50, hidden=(6, 5))
    out = {}
    prev = _accel.backend()
    for b in ("numpy", "numba"):
        _accel.set_backend(b)
        out[b] = fit_mlp(X, y, cfg)[0].flat()
    _accel.set_backend(prev)
    assert np.allclose(out["numpy"], out["numba"], rtol=1e-9, atol=1e-12)


def test_robbins_monro_schedule():
    cfg = TrainConfig(learning_rate=0.5, lr_schedule="robbins_monro")
    a = step_sizes(cfg, 1, 100000)
    assert a[0] == 0.5 and a[9] == 0.05
    assert np.all(np.diff(a) < 0)
    # partial sums of 1/k grow like log k; sums of 1/k^2 stay below pi^2/6
    assert a.sum() / 0.5 > math.log(100000)
    assert np.sum((a / 0.5) ** 2) < math.pi ** 2 / 6
    assert np.all(step_sizes(TrainConfig(), 5, 10) == 0.01)
    X = np.linspace(-1, 1, 40)
    _, rep = train(_dataset(X, 0.5 + 0.2 * X), TrainConfig(epochs=50, batch_size=8, hidden=(4,),
                                                            lr_schedule="robbins_monro", learning_rate=0.1))
    assert rep.final_loss < rep.initial_loss


def test_config_and_divergence_errors():
    X = np.linspace(-1, 1, 10)
    with pytest.raises(ParameterError):
        train(_dataset(X, np.full(10, 0.5)), TrainConfig(batch_size=11))
    with pytest.raises(ParameterError):
        TrainConfig(lr_schedule="cosine").validate()
    with pytest.raises(ParameterError):
        train(_dataset(np.empty((0, 1)), np.empty(0)), TrainConfig())
    y = np.full(10, 0.5)
    y[3] = np.nan
    with pytest.raises(TrainingDiverged) as exc:
        train(_dataset(X, y), TrainConfig(epochs=3, batch_size=5))
    assert exc.value.epoch == 1
