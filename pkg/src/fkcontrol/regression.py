"""Desirability regression: tanh MLP with a sigmoid output, fitted by minibatch Adam.

Weights are stored as (fan_in, fan_out) matrices so a layer computes
``h @ W + b``. All parameters also live in one flat vector (weights then bias,
layer by layer) which is what the optimizer and the training kernels update.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from ._accel import njit
from .errors import DimensionError, ParameterError, TrainingDiverged

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(eq=False)
class MlpParams:
    layer_dims: tuple
    weights: list
    biases: list
    hidden_activation: str = "tanh"
    output_activation: str = "sigmoid"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or self.layer_dims[-1] != 1:
            raise DimensionError(f"layer_dims must end in 1, got {self.layer_dims}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("need one weight matrix and one bias per layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_dims[l], self.layer_dims[l + 1]) or b.shape != (self.layer_dims[l + 1],):
                raise DimensionError(f"layer {l} has weight {W.shape} and bias {b.shape}, "
                                     f"expected {(self.layer_dims[l], self.layer_dims[l + 1])}")

    @property
    def num_layers(self):
        return len(self.weights)

    def flat(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    @classmethod
    def from_flat(cls, layer_dims, theta):
        weights, biases = [], []
        off = 0
        for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(np.array(theta[off:off + din * dout]).reshape(din, dout))
            off += din * dout
            biases.append(np.array(theta[off:off + dout]))
            off += dout
        if off != len(theta):
            raise DimensionError(f"flat vector has {len(theta)} entries, layers need {off}")
        return cls(tuple(layer_dims), weights, biases)

    def copy(self):
        return MlpParams(self.layer_dims, [W.copy() for W in self.weights], [b.copy() for b in self.biases])


def num_params(layer_dims):
    return sum(a * b + b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


def init_params(layer_dims, seed=0):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng([int(seed), 0])
    weights, biases = [], []
    for din, dout in zip(layer_dims[:-1], layer_dims[1:]):
        a = np.sqrt(6.0 / (din + dout))
        weights.append(rng.uniform(-a, a, size=(din, dout)))
        biases.append(np.zeros(dout))
    return MlpParams(tuple(layer_dims), weights, biases)


def zero_params(layer_dims):
    return MlpParams(tuple(layer_dims),
                     [np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])],
                     [np.zeros(b) for b in layer_dims[1:]])


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _as_batch(params, x_feat):
    x = np.asarray(x_feat, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[-1] != params.layer_dims[0]:
        raise DimensionError(f"expected {params.layer_dims[0]} features, got {X.shape[-1]}")
    return X, single


def _forward(params, X):
    hs = [X]
    h = X
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ W + b)
        hs.append(h)
    z = (h @ params.weights[-1] + params.biases[-1])[:, 0]
    return sigmoid(z), hs


def _backward(params, hs, psi, dpsi):
    """Reverse pass from dLoss/dpsi; returns (weight grads, bias grads, input grad)."""
    dz = (dpsi * psi * (1.0 - psi))[:, None]
    gW = [None] * params.num_layers
    gb = [None] * params.num_layers
    for l in range(params.num_layers - 1, -1, -1):
        gW[l] = hs[l].T @ dz
        gb[l] = dz.sum(axis=0)
        dh = dz @ params.weights[l].T
        dz = dh * (1.0 - hs[l] ** 2) if l > 0 else dh
    return gW, gb, dz


def mlp_forward(params, x_feat):
    """Model output in (0, 1) for one feature vector or a batch."""
    X, single = _as_batch(params, x_feat)
    psi, _ = _forward(params, X)
    return float(psi[0]) if single else psi


def mlp_grad_params(params, x_feat, target):
    """Gradient of 0.5 * (psi(x) - target)^2 with respect to every parameter."""
    X, single = _as_batch(params, x_feat)
    if not single:
        raise DimensionError("mlp_grad_params takes a single feature vector")
    psi, hs = _forward(params, X)
    gW, gb, _ = _backward(params, hs, psi, psi - float(target))
    return MlpParams(params.layer_dims, gW, gb)


def mlp_grad_input(params, x_feat):
    """Gradient of the model output with respect to its input features."""
    X, single = _as_batch(params, x_feat)
    psi, hs = _forward(params, X)
    _, _, dx = _backward(params, hs, psi, np.ones_like(psi))
    return dx[0] if single else dx


def mlp_value_and_grad_input(params, X):
    psi, hs = _forward(params, X)
    _, _, dx = _backward(params, hs, psi, np.ones_like(psi))
    return psi, dx


# -- featurization -----------------------------------------------------------

@dataclass(eq=False)
class Featurizer:
    """Raw state -> standardized features. Angle axes become (cos, sin) pairs."""
    n: int
    angle_axes: tuple = ()
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None

    @property
    def num_features(self):
        return self.n + len(self.angle_axes)

    @property
    def names(self):
        out = []
        for i in range(self.n):
            out += [f"cos(x{i + 1})", f"sin(x{i + 1})"] if i in self.angle_axes else [f"x{i + 1}"]
        return out

    def raw_features(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = []
        for i in range(self.n):
            if i in self.angle_axes:
                cols += [np.cos(X[:, i]), np.sin(X[:, i])]
            else:
                cols.append(X[:, i])
        return np.stack(cols, axis=1)

    def fit(self, X):
        F = self.raw_features(X)
        self.mean = F.mean(axis=0)
        std = F.std(axis=0)
        self.std = np.where(std > 1e-12, std, 1.0)
        return self

    def __call__(self, X):
        F = self.raw_features(X)
        if self.mean is None:
            return F
        return (F - self.mean) / self.std

    def jacobian(self, X):
        """d features / d state, shape (B, num_features, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = len(X)
        J = np.zeros((B, self.num_features, self.n))
        r = 0
        for i in range(self.n):
            if i in self.angle_axes:
                J[:, r, i] = -np.sin(X[:, i])
                J[:, r + 1, i] = np.cos(X[:, i])
                r += 2
            else:
                J[:, r, i] = 1.0
                r += 1
        if self.std is not None:
            J /= self.std[None, :, None]
        return J


@dataclass(eq=False)
class DesirabilityModel:
    """Fitted model evaluated on raw states."""
    params: MlpParams
    featurizer: Featurizer
    system: str = ""
    lam: float = 1.0
    R: np.ndarray = field(default_factory=lambda: np.eye(1))

    def value(self, X):
        return mlp_forward(self.params, self.featurizer(X))

    def value_and_grad(self, X):
        """(psi, d psi / d x) for a batch of raw states, shapes (B,), (B, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        psi, dfeat = mlp_value_and_grad_input(self.params, self.featurizer(X))
        return psi, np.einsum("bf,bfn->bn", dfeat, self.featurizer.jacobian(X))

    def grad(self, x):
        """Gradient with respect to the raw state."""
        x = np.asarray(x, dtype=float)
        _, g = self.value_and_grad(x)
        return g[0] if x.ndim == 1 else g


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 0.01
    batch_size: int = 128
    seed: int = 0
    lr_schedule: str = "constant"
    hidden: tuple = (32, 32)

    def validate(self, num_samples=None):
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ParameterError("epochs, batch_size and learning_rate must be positive")
        if num_samples is not None and self.batch_size > num_samples:
            raise ParameterError(f"batch_size {self.batch_size} exceeds dataset size {num_samples}")
        if self.lr_schedule not in ("constant", "robbins_monro"):
            raise ParameterError(f"lr_schedule must be 'constant' or 'robbins_monro', got {self.lr_schedule!r}")
        if any(h < 1 for h in self.hidden):
            raise ParameterError("hidden layer widths must be positive")


@dataclass
class LossReport:
    losses: np.ndarray      # full-dataset MSE, index 0 is before training
    grad_norms: np.ndarray  # mean minibatch gradient norm per epoch

    @property
    def initial_loss(self):
        return float(self.losses[0])

    @property
    def final_loss(self):
        return float(self.losses[-1])


def step_sizes(config, first_step, count):
    """Learning rates for Adam steps first_step .. first_step + count - 1 (1-based)."""
    k = np.arange(first_step, first_step + count, dtype=float)
    if config.lr_schedule == "robbins_monro":
        return config.learning_rate / k
    return np.full(count, float(config.learning_rate))


def mse(params, X, y):
    psi, _ = _forward(params, X)
    return float(np.mean((psi - y) ** 2))


@njit(nogil=True, cache=True)
def _epoch_nb(theta, m1, m2, t0, X, y, perm, batch, lrs, dims, b1, b2, eps):
    L = dims.shape[0] - 1
    N = perm.shape[0]
    P = theta.shape[0]
    grad = np.empty(P)
    t = t0
    gsum = 0.0
    nb = 0
    for start in range(0, N, batch):
        stop = min(start + batch, N)
        B = stop - start
        idx = perm[start:stop]
        Xb = np.empty((B, dims[0]))
        for r in range(B):
            Xb[r, :] = X[idx[r], :]
        hs = [Xb]
        h = Xb
        off = 0
        for l in range(L):
            din, dout = dims[l], dims[l + 1]
            W = theta[off:off + din * dout].reshape((din, dout))
            b = theta[off + din * dout:off + din * dout + dout]
            z = h @ W
            for r in range(B):
                for o in range(dout):
                    z[r, o] += b[o]
            if l < L - 1:
                h = np.tanh(z)
                hs.append(h)
            else:
                h = z
            off += din * dout + dout
        dz = np.empty((B, 1))
        for r in range(B):
            zr = h[r, 0]
            if zr >= 0:
                psi = 1.0 / (1.0 + np.exp(-zr))
            else:
                e = np.exp(zr)
                psi = e / (1.0 + e)
            dz[r, 0] = (2.0 / B) * (psi - y[idx[r]]) * psi * (1.0 - psi)
        off = P
        for l in range(L - 1, -1, -1):
            din, dout = dims[l], dims[l + 1]
            off -= din * dout + dout
            W = theta[off:off + din * dout].reshape((din, dout))
            gW = hs[l].T @ dz
            grad[off:off + din * dout] = gW.ravel()
            for o in range(dout):
                s = 0.0
                for r in range(B):
                    s += dz[r, o]
                grad[off + din * dout + o] = s
            if l > 0:
                dh = dz @ W.T
                hl = hs[l]
                for r in range(B):
                    for i in range(din):
                        dh[r, i] *= 1.0 - hl[r, i] * hl[r, i]
                dz = dh
        t += 1
        lr = lrs[t - t0 - 1]
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        gn = 0.0
        for q in range(P):
            g = grad[q]
            gn += g * g
            m1[q] = b1 * m1[q] + (1.0 - b1) * g
            m2[q] = b2 * m2[q] + (1.0 - b2) * g * g
            theta[q] -= lr * (m1[q] / bc1) / (np.sqrt(m2[q] / bc2) + eps)
        gsum += np.sqrt(gn)
        nb += 1
    return gsum / nb


def _epoch_np(theta, m1, m2, t0, X, y, perm, batch, lrs, dims):
    N = len(perm)
    t = t0
    gsum = 0.0
    nb = 0
    for start in range(0, N, batch):
        idx = perm[start:start + batch]
        B = len(idx)
        params = MlpParams.from_flat(dims, theta)
        psi, hs = _forward(params, X[idx])
        gW, gb, _ = _backward(params, hs, psi, (2.0 / B) * (psi - y[idx]))
        grad = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(gW, gb)])
        t += 1
        lr = lrs[t - t0 - 1]
        m1 *= ADAM_BETA1
        m1 += (1.0 - ADAM_BETA1) * grad
        m2 *= ADAM_BETA2
        m2 += (1.0 - ADAM_BETA2) * grad * grad
        mhat = m1 / (1.0 - ADAM_BETA1 ** t)
        vhat = m2 / (1.0 - ADAM_BETA2 ** t)
        theta -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        gsum += float(np.sqrt(grad @ grad))
        nb += 1
    return gsum / nb


def fit_mlp(X, y, config, init=None):
    """Minibatch Adam on the mean-squared error; X are already features."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    N = len(y)
    if N == 0:
        raise ParameterError("cannot train on an empty dataset")
    config.validate(N)
    dims = (X.shape[1],) + tuple(config.hidden) + (1,)
    params = init if init is not None else init_params(dims, config.seed)
    if params.layer_dims != dims:
        raise DimensionError(f"initial parameters have dims {params.layer_dims}, expected {dims}")
    theta = params.flat()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    dims_arr = np.asarray(dims, dtype=np.int64)
    shuffle = np.random.default_rng([int(config.seed), 1])
    batches = -(-N // config.batch_size)
    use_nb = _accel.numba_enabled()

    losses = np.empty(config.epochs + 1)
    gnorms = np.empty(config.epochs)
    losses[0] = mse(params, X, y)
    t = 0
    for epoch in range(config.epochs):
        perm = shuffle.permutation(N)
        lrs = step_sizes(config, t + 1, batches)
        if use_nb:
            gnorms[epoch] = _epoch_nb(theta, m1, m2, t, X, y, perm, config.batch_size, lrs, dims_arr,
                                      ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
        else:
            gnorms[epoch] = _epoch_np(theta, m1, m2, t, X, y, perm, config.batch_size, lrs, dims)
        t += batches
        loss = mse(MlpParams.from_flat(dims, theta), X, y)
        if not np.isfinite(loss) or not np.all(np.isfinite(theta)):
            raise TrainingDiverged(f"training loss became non-finite at epoch {epoch + 1}", epoch + 1)
        losses[epoch + 1] = loss
    return MlpParams.from_flat(dims, theta), LossReport(losses, gnorms)


def train(dataset, config, angle_axes=(), init=None, lam=None, R=None):
    """Fit a desirability model to a dataset; returns (DesirabilityModel, LossReport)."""
    if len(dataset) == 0:
        raise ParameterError("cannot train on an empty dataset")
    feat = Featurizer(dataset.states.shape[1], tuple(angle_axes)).fit(dataset.states)
    params, report = fit_mlp(feat(dataset.states), dataset.psi_hat, config, init=init)
    meta = dataset.meta
    model = DesirabilityModel(
        params=params, featurizer=feat, system=meta.get("system", ""),
        lam=float(lam if lam is not None else meta.get("lambda", 1.0)),
        R=np.atleast_2d(np.asarray(R if R is not None else 1.0, dtype=float)),
    )
    return model, report
