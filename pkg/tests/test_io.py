import json

import numpy as np
import pytest

from fkcontrol import io
from fkcontrol.cost import state_quadratic_cost
from fkcontrol.dynamics import make_pendulum
from fkcontrol.errors import ConfigError, MetadataMismatch
from fkcontrol.regression import TrainConfig, train
from fkcontrol.sampler import Dataset, RolloutConfig, generate_dataset


@pytest.fixture(scope="module")
def dataset():
    return generate_dataset(make_pendulum(), state_quadratic_cost(lam=20.0, horizon=0.3),
                            RolloutConfig(dt=0.01, num_rollouts=4, num_states=60, seed=12))


def test_dataset_round_trip_exact(tmp_path, dataset):
    path = tmp_path / "d.csv"
    io.write_dataset(path, dataset)
    lines = path.read_text().splitlines()
    assert lines[0] == ("# meta: system=pendulum cost=state_quadratic lambda=20 T=0.29999999999999999 "
                        "dt=0.01 M=4 seed=12")
    assert lines[1] == "x1,x2,psi_hat,m_used"
    back = io.read_dataset(path)
    assert np.array_equal(back.states, dataset.states)
    assert np.array_equal(back.psi_hat, dataset.psi_hat)
    assert np.array_equal(back.m_used, dataset.m_used)
    assert back.meta == dataset.meta


def test_dataset_noise_key(tmp_path):
    ds = Dataset(np.zeros((1, 2)), np.ones(1), np.ones(1, dtype=np.int64),
                 {"system": "s", "cost": "c", "lambda": 1.0, "T": 1.0, "dt": 0.1, "M": 1, "seed": 0,
                  "noise": "per_step"})
    io.write_dataset(tmp_path / "d.csv", ds)
    assert io.read_dataset(tmp_path / "d.csv").meta["noise"] == "per_step"


def test_dataset_header_required(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x1,x2,psi_hat,m_used\n0,0,1,1\n")
    with pytest.raises(MetadataMismatch):
        io.read_dataset(p)
    p.write_text("# meta: system=a cost=b lambda=1\nx1,psi_hat,m_used\n0,1,1\n")
    with pytest.raises(MetadataMismatch):
        io.read_dataset(p)


def test_model_round_trip_exact(tmp_path, dataset):
    model, _ = train(dataset, TrainConfig(epochs=3, batch_size=20, hidden=(5, 4)), angle_axes=(0,),
                     lam=20.0, R=np.eye(1))
    path = tmp_path / "m.json"
    io.write_model(path, model)
    d = json.loads(path.read_text())
    assert d["version"] == 1 and d["layer_dims"] == [3, 5, 4, 1]
    assert d["features"] == ["cos(x1)", "sin(x1)", "x2"]
    assert d["activations"] == {"hidden": "tanh", "output": "sigmoid"}
    back = io.read_model(path)
    for a, b in zip(model.params.flat(), back.params.flat()):
        assert a == b
    assert np.array_equal(back.featurizer.mean, model.featurizer.mean)
    assert np.array_equal(back.featurizer.std, model.featurizer.std)
    X = np.random.default_rng(0).uniform(-3, 3, size=(20, 2))
    assert np.array_equal(back.value_and_grad(X)[1], model.value_and_grad(X)[1])
    io.write_model(tmp_path / "m2.json", back)
    assert (tmp_path / "m2.json").read_bytes() == path.read_bytes()


def test_model_version_checked(tmp_path, dataset):
    model, _ = train(dataset, TrainConfig(epochs=1, batch_size=20, hidden=(3,)))
    d = io.model_to_dict(model)
    d["version"] = 2
    with pytest.raises(ConfigError):
        io.model_from_dict(d)
