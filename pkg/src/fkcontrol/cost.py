"""Running/terminal costs, control penalty, temperature and the desirability boundary."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._accel import njit
from .errors import DimensionError, FactorizationError, ParameterError


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular ``L`` with ``L @ L.T == inv(R)``."""
    L: np.ndarray


@dataclass(frozen=True, eq=False)
class CostSpec:
    running: Callable
    terminal: Callable
    R: np.ndarray
    lam: float
    horizon: float
    name: str = "custom"
    Q: Optional[np.ndarray] = None
    Qf: Optional[np.ndarray] = None
    jit_running: Optional[Callable] = None
    jit_terminal: Optional[Callable] = None
    jit_params: Optional[np.ndarray] = None

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape[0] != R.shape[1]:
            raise DimensionError(f"R must be square, got shape {R.shape}")
        if not np.allclose(R, R.T, rtol=0.0, atol=1e-12):
            raise ParameterError("R must be symmetric")
        object.__setattr__(self, "R", R)
        if not self.lam > 0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if not self.horizon > 0:
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        _cholesky_or_raise(R, "R")

    @property
    def has_jit(self):
        return self.jit_running is not None and self.jit_terminal is not None

    @property
    def R_inv(self):
        Ri = np.linalg.inv(self.R)
        return 0.5 * (Ri + Ri.T)

    def replace(self, **changes):
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return CostSpec(**kw)


def _cholesky_or_raise(R, label):
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        pass
    for k in range(1, R.shape[0] + 1):
        try:
            np.linalg.cholesky(R[:k, :k])
        except np.linalg.LinAlgError:
            raise FactorizationError(
                f"{label} is not positive definite: leading minor of order {k} is not positive") from None
    raise FactorizationError(f"{label} is not positive definite")


def cholesky_rinv(spec):
    _cholesky_or_raise(spec.R, "R")
    return CholeskyFactor(np.linalg.cholesky(spec.R_inv))


def control_penalty(spec, u):
    """0.5 u^T R u, batched over leading axes."""
    u = np.asarray(u, dtype=float)
    return 0.5 * np.einsum("...i,ij,...j->...", u, spec.R, u)


def desirability_boundary(spec, x):
    """Terminal desirability exp(-phi(x) / lambda)."""
    return np.exp(-np.asarray(spec.terminal(x)) / spec.lam)


def check_cost(spec, model, num_samples=1000, seed=0):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(model.lower, model.upper, size=(num_samples, model.n))
    if np.any(np.asarray(spec.running(xs)) < 0) or np.any(np.asarray(spec.terminal(xs)) < 0):
        raise ParameterError("running and terminal costs must be nonnegative on the domain")
    if spec.R.shape != (model.m, model.m):
        raise DimensionError(f"R has shape {spec.R.shape}, system has m={model.m}")


# -- quadratic presets -------------------------------------------------------

@njit(nogil=True, cache=True)
def _quad_running_nb(x, p):
    n = x.shape[0]
    s = 0.0
    for i in range(n):
        for j in range(n):
            s += x[i] * p[i * n + j] * x[j]
    return s


@njit(nogil=True, cache=True)
def _quad_terminal_nb(x, p):
    n = x.shape[0]
    off = n * n
    s = 0.0
    for i in range(n):
        for j in range(n):
            s += x[i] * p[off + i * n + j] * x[j]
    return s


def quadratic_cost(Q, Qf, R, lam, horizon, name="quadratic"):
    """l(x) = x^T Q x, phi(x) = x^T Qf x."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Qf = np.atleast_2d(np.asarray(Qf, dtype=float))
    if Q.shape != Qf.shape or Q.shape[0] != Q.shape[1]:
        raise DimensionError("Q and Qf must be square with equal shapes")
    for label, M in (("Q", Q), ("Qf", Qf)):
        if not np.allclose(M, M.T, rtol=0.0, atol=1e-12):
            raise ParameterError(f"{label} must be symmetric")
        if np.min(np.linalg.eigvalsh(M)) < -1e-12:
            raise ParameterError(f"{label} must be positive semidefinite")

    def running(x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, Q, x)

    def terminal(x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, Qf, x)

    return CostSpec(
        running=running, terminal=terminal, R=R, lam=float(lam), horizon=float(horizon),
        name=name, Q=Q, Qf=Qf,
        jit_running=_quad_running_nb, jit_terminal=_quad_terminal_nb,
        jit_params=np.concatenate([Q.ravel(), Qf.ravel()]),
    )


def state_quadratic_cost(lam=1.0, horizon=1.0, R=1.0, n=2):
    """l = phi = x^T x (double integrator example)."""
    return quadratic_cost(np.eye(n), np.eye(n), R, lam, horizon, name="state_quadratic")


def pendulum_cost(lam=20.0, horizon=1.2, R=1.0):
    """l = phi = theta^2 + theta_dot^2 / 10."""
    W = np.diag([1.0, 0.1])
    return quadratic_cost(W, W, R, lam, horizon, name="pendulum_swingup")


@njit(nogil=True, cache=True)
def _wrapped_pend_nb(x, p):
    th = (x[0] + np.pi) % (2.0 * np.pi) - np.pi
    return p[0] * th * th + p[1] * x[1] * x[1]


def pendulum_wrapped_cost(lam=20.0, horizon=1.2, R=1.0):
    """Same weights as :func:`pendulum_cost` but theta wrapped to [-pi, pi).

    Not quadratic, so no LQ oracle. Hanging at theta = +-pi is then the costliest
    state rather than one cheaper than a full extra turn.
    """
    w = np.array([1.0, 0.1])

    def running(x):
        x = np.asarray(x, dtype=float)
        th = (x[..., 0] + np.pi) % (2.0 * np.pi) - np.pi
        return w[0] * th ** 2 + w[1] * x[..., 1] ** 2

    return CostSpec(
        running=running, terminal=running, R=R, lam=float(lam), horizon=float(horizon),
        name="pendulum_swingup_wrapped",
        jit_running=_wrapped_pend_nb, jit_terminal=_wrapped_pend_nb, jit_params=w,
    )


def zero_cost(lam=1.0, horizon=1.0, R=1.0, n=2):
    Z = np.zeros((n, n))
    return quadratic_cost(Z, Z, R, lam, horizon, name="zero")


COST_PRESETS = {
    "state_quadratic": state_quadratic_cost,
    "pendulum_swingup": pendulum_cost,
    "pendulum_swingup_wrapped": pendulum_wrapped_cost,
    "zero": zero_cost,
}


def make_cost(preset, lam, horizon, R, n=2):
    try:
        factory = COST_PRESETS[preset]
    except KeyError:
        raise ParameterError(f"unknown cost preset {preset!r}; choose from {sorted(COST_PRESETS)}") from None
    if preset.startswith("pendulum_swingup"):
        if n != 2:
            raise DimensionError(f"{preset} cost needs a 2-state system")
        return factory(lam=lam, horizon=horizon, R=R)
    return factory(lam=lam, horizon=horizon, R=R, n=n)
