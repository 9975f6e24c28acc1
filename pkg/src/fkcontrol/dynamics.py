"""Control-affine systems dx = (f(x) + G(x) u) dt and the two benchmark instances.

Callbacks are batched: ``drift`` maps states of shape ``(..., n)`` to
``(..., n)`` and ``input_matrix`` maps them to ``(..., n, m)``. Built-in
systems also carry scalar numba kernels (``jit_drift(x, p, out)``,
``jit_input(x, p, out)``) with their parameters packed in ``jit_params`` so
the rollout kernels can run without the Python callbacks.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._accel import njit
from .errors import DimensionError, NumericalOverflowError, ParameterError, PreconditionError


@dataclass(frozen=True, eq=False)
class SystemModel:
    name: str
    n: int
    m: int
    drift: Callable
    input_matrix: Callable
    lower: np.ndarray
    upper: np.ndarray
    params: dict = field(default_factory=dict)
    angle_axes: tuple = ()
    jit_drift: Optional[Callable] = None
    jit_input: Optional[Callable] = None
    jit_params: Optional[np.ndarray] = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != (self.n,) or upper.shape != (self.n,):
            raise DimensionError(f"domain bounds must have length n={self.n}")
        if not np.all(upper > lower):
            raise ParameterError("domain upper bounds must exceed lower bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def has_jit(self):
        return self.jit_drift is not None and self.jit_input is not None

    def with_domain(self, lower, upper):
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(lower=lower, upper=upper)
        return SystemModel(**kw)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)


# -- double integrator -------------------------------------------------------

def _di_drift(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    out[..., 0] = x[..., 1]
    return out


def _di_input(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape + (1,))
    out[..., 1, 0] = 1.0
    return out


@njit(nogil=True, cache=True)
def _di_drift_nb(x, p, out):
    out[0] = x[1]
    out[1] = 0.0


@njit(nogil=True, cache=True)
def _di_input_nb(x, p, out):
    out[0, 0] = 0.0
    out[1, 0] = 1.0


def make_double_integrator(lower=(-3.0, -3.0), upper=(3.0, 3.0)):
    """Unit-mass particle: position and velocity driven by acceleration."""
    return SystemModel(
        name="double_integrator", n=2, m=1,
        drift=_di_drift, input_matrix=_di_input,
        lower=lower, upper=upper,
        jit_drift=_di_drift_nb, jit_input=_di_input_nb,
        jit_params=np.zeros(1),
    )


# -- pendulum ----------------------------------------------------------------

@njit(nogil=True, cache=True)
def _pend_drift_nb(x, p, out):
    out[0] = x[1]
    out[1] = p[0] * np.sin(x[0])


@njit(nogil=True, cache=True)
def _pend_input_nb(x, p, out):
    out[0, 0] = 0.0
    out[1, 0] = p[1]


def make_pendulum(mass=1.0, length=1.0, gravity=9.81,
                  lower=(-np.pi, -8.0), upper=(np.pi, 8.0)):
    """Torque-driven pendulum with x = (theta, theta_dot), theta = 0 upright."""
    if not mass > 0 or not length > 0:
        raise ParameterError(f"pendulum mass and length must be positive (got {mass}, {length})")
    g_over_l = gravity / length
    inv_inertia = 1.0 / (mass * length ** 2)

    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = x[..., 1]
        out[..., 1] = g_over_l * np.sin(x[..., 0])
        return out

    def input_matrix(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (1,))
        out[..., 1, 0] = inv_inertia
        return out

    return SystemModel(
        name="pendulum", n=2, m=1,
        drift=drift, input_matrix=input_matrix,
        lower=lower, upper=upper,
        params={"mass": mass, "length": length, "gravity": gravity},
        angle_axes=(0,),
        jit_drift=_pend_drift_nb, jit_input=_pend_input_nb,
        jit_params=np.array([g_over_l, inv_inertia]),
    )


SYSTEMS = {
    "double_integrator": make_double_integrator,
    "pendulum": make_pendulum,
}


def make_system(name, params=None, domain=None):
    """Build a named system; ``domain`` is ``(lower, upper)``."""
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise ParameterError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None
    kwargs = dict(params or {})
    if domain is not None:
        kwargs["lower"], kwargs["upper"] = domain
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {name}: {exc}") from None


def euler_step(model, x, u, dt):
    """One forward-Euler step x + (f(x) + G(x) u) dt. Does not clamp to the domain."""
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != model.n or u.shape[-1] != model.m:
        raise DimensionError(f"expected state length {model.n} and input length {model.m}")
    if not np.all(np.isfinite(x)):
        raise PreconditionError("state must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        xdot = model.drift(x) + np.einsum("...ij,...j->...i", model.input_matrix(x), u)
        x_next = x + xdot * dt
    if not np.all(np.isfinite(x_next)):
        raise NumericalOverflowError("euler step produced a non-finite state", state=x)
    return x_next


def check_model(model, num_samples=1000, seed=0):
    """Sample the domain and verify drift/input shapes and finiteness."""
    rng = np.random.default_rng(seed)
    xs = rng.uniform(model.lower, model.upper, size=(num_samples, model.n))
    f = np.asarray(model.drift(xs))
    g = np.asarray(model.input_matrix(xs))
    if f.shape != (num_samples, model.n):
        raise DimensionError(f"drift returned shape {f.shape}, expected {(num_samples, model.n)}")
    if g.shape != (num_samples, model.n, model.m):
        raise DimensionError(f"input matrix returned shape {g.shape}, expected {(num_samples, model.n, model.m)}")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise NumericalOverflowError("model returned non-finite values inside its domain")


def wrap_angle(theta):
    """Map angles to [-pi, pi)."""
    return (np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi
