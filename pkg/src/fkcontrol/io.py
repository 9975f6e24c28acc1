"""Dataset CSV and model JSON files, plus small CSV writers for plot outputs."""
import json

import numpy as np

from .errors import ConfigError, MetadataMismatch
from .regression import DesirabilityModel, Featurizer, MlpParams
from .sampler import Dataset

MODEL_FORMAT_VERSION = 1
_META_KEYS = ("system", "cost", "lambda", "T", "dt", "M", "seed")


def fmt(v):
    return f"{float(v):.17g}"


def write_dataset(path, ds):
    n = ds.states.shape[1]
    keys = _META_KEYS + tuple(k for k in ("noise",) if k in ds.meta)
    meta = " ".join(f"{k}={_meta_str(ds.meta[k])}" for k in keys)
    cols = [f"x{i + 1}" for i in range(n)] + ["psi_hat", "m_used"]
    with open(path, "w") as fh:
        fh.write(f"# meta: {meta}\n")
        fh.write(",".join(cols) + "\n")
        for x, p, k in zip(ds.states, ds.psi_hat, ds.m_used):
            fh.write(",".join([fmt(v) for v in x] + [fmt(p), str(int(k))]) + "\n")


def _meta_str(v):
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def read_dataset(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# meta:"):
            raise MetadataMismatch(f"{path}: missing '# meta:' header")
        meta = {}
        for item in first[len("# meta:"):].split():
            key, _, val = item.partition("=")
            meta[key] = val
        missing = [k for k in _META_KEYS if k not in meta]
        if missing:
            raise MetadataMismatch(f"{path}: metadata lacks {missing}")
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    n = len(header) - 2
    data = np.array([[float(v) for v in r[:-1]] for r in rows]).reshape(-1, n + 1)
    used = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    parsed = {
        "system": meta["system"], "cost": meta["cost"], "lambda": float(meta["lambda"]),
        "T": float(meta["T"]), "dt": float(meta["dt"]), "M": int(meta["M"]), "seed": int(meta["seed"]),
    }
    if "noise" in meta:
        parsed["noise"] = meta["noise"]
    meta = parsed
    return Dataset(states=data[:, :n], psi_hat=data[:, n], m_used=used, meta=meta)


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def model_to_dict(model):
    p = model.params
    f = model.featurizer
    return {
        "version": MODEL_FORMAT_VERSION,
        "system": model.system,
        "features": f.names,
        "state_dim": f.n,
        "angle_axes": list(f.angle_axes),
        "layer_dims": list(p.layer_dims),
        "activations": {"hidden": p.hidden_activation, "output": p.output_activation},
        "standardization": {"mean": _floats(f.mean), "std": _floats(f.std)},
        "weights": [_floats(W) for W in p.weights],
        "biases": [_floats(b) for b in p.biases],
        "lambda": float(model.lam),
        "R": [_floats(row) for row in np.atleast_2d(model.R)],
    }


def model_from_dict(d):
    if d.get("version") != MODEL_FORMAT_VERSION:
        raise ConfigError(f"unsupported model file version {d.get('version')!r}")
    dims = tuple(d["layer_dims"])
    weights = [np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], dims[:-1], dims[1:])]
    biases = [np.array(b, dtype=float) for b in d["biases"]]
    acts = d["activations"]
    if acts != {"hidden": "tanh", "output": "sigmoid"}:
        raise ConfigError(f"unsupported activations {acts}")
    params = MlpParams(dims, weights, biases)
    st = d["standardization"]
    feat = Featurizer(int(d["state_dim"]), tuple(d["angle_axes"]),
                      mean=np.array(st["mean"], dtype=float), std=np.array(st["std"], dtype=float))
    return DesirabilityModel(params=params, featurizer=feat, system=d["system"],
                             lam=float(d["lambda"]), R=np.array(d["R"], dtype=float))


def write_model(path, model):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def read_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(rows):
            fh.write(",".join(fmt(v) for v in row) + "\n")
