"""Central finite-difference oracles shared by the gradient tests."""
import numpy as np

from fkcontrol.regression import MlpParams, init_params, mlp_forward

H = 1e-5


def central_diff(f, x, h=H):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_norm_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def random_case(rng):
    """Random architecture, parameters, input and target."""
    depth = int(rng.integers(1, 4))
    dims = (int(rng.integers(1, 5)),) + tuple(int(rng.integers(2, 9)) for _ in range(depth - 1)) + (1,)
    params = init_params(dims, seed=int(rng.integers(1 << 30)))
    theta = params.flat() + 0.1 * rng.standard_normal(params.flat().size)
    params = MlpParams.from_flat(dims, theta)
    x = rng.normal(size=dims[0])
    return params, x, float(rng.uniform(0, 1))


def fd_param_grad(params, x, target):
    dims = params.layer_dims

    def loss(theta):
        return 0.5 * (mlp_forward(MlpParams.from_flat(dims, theta), x) - target) ** 2

    return central_diff(loss, params.flat())
