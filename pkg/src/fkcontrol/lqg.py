"""Closed-form finite-horizon value function for linear-quadratic instances.

With V(x, t) = x^T S(t) x + c(t), dynamics dx = (A x + G u) dt, running cost
x^T Q x + u^T R u / 2, terminal cost x^T Qf x and noise covariance
Sigma = lambda G R^-1 G^T, the HJB equation splits into

    -dS/dt = Q + A^T S + S A - 2 S G R^-1 G^T S,   S(T) = Qf
    -dc/dt = tr(S Sigma),                           c(T) = 0

which are integrated backward from T with fixed-step RK4.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, OracleIntegrationError, ParameterError, PreconditionError, RangeError


@dataclass(frozen=True, eq=False)
class LinearQuadraticProblem:
    A: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    Qf: np.ndarray
    R: np.ndarray
    lam: float
    horizon: float

    def __post_init__(self):
        for name in ("A", "G", "Q", "Qf", "R"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n, m = self.G.shape
        if self.A.shape != (n, n) or self.Q.shape != (n, n) or self.Qf.shape != (n, n) or self.R.shape != (m, m):
            raise DimensionError("inconsistent A, G, Q, Qf, R dimensions")
        for name in ("Q", "Qf", "R"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, rtol=0.0, atol=1e-12):
                raise ParameterError(f"{name} must be symmetric")
        if not self.horizon > 0:
            raise ParameterError("horizon must be positive")
        if self.lam < 0:
            raise ParameterError("lambda must be nonnegative")

    @property
    def R_inv(self):
        return np.linalg.inv(self.R)

    @property
    def noise_cov(self):
        return self.lam * self.G @ self.R_inv @ self.G.T


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    times: np.ndarray  # descending, times[0] == T, times[-1] == 0
    S: np.ndarray      # (K+1, n, n)
    c: np.ndarray      # (K+1,)
    lam: float

    @property
    def horizon(self):
        return float(self.times[0])

    def at(self, t):
        """Linearly interpolated (S(t), c(t))."""
        T = self.horizon
        if not (0.0 <= t <= T):
            raise RangeError(f"t={t} outside [0, {T}]")
        ts = self.times[::-1]
        k = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(ts) - 2))
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        S_asc = self.S[::-1]
        c_asc = self.c[::-1]
        S = (1.0 - w) * S_asc[k] + w * S_asc[k + 1]
        c = (1.0 - w) * c_asc[k] + w * c_asc[k + 1]
        return S, float(c)


def lq_problem_from(model, spec, probe_seed=0):
    """Extract (A, G, Q, Qf) from a linear system with a quadratic cost preset."""
    if spec.Q is None or spec.Qf is None:
        raise ParameterError("the cost must be a quadratic preset to build an LQ problem")
    n = model.n
    A = np.asarray(model.drift(np.eye(n)), dtype=float).T
    rng = np.random.default_rng(probe_seed)
    xs = rng.uniform(model.lower, model.upper, size=(32, n))
    if not np.allclose(model.drift(xs), xs @ A.T, atol=1e-10):
        raise ParameterError(f"{model.name} drift is not linear")
    Gs = np.asarray(model.input_matrix(xs))
    if not np.allclose(Gs, Gs[0], atol=1e-12):
        raise ParameterError(f"{model.name} input matrix is not constant")
    return LinearQuadraticProblem(A=A, G=Gs[0], Q=spec.Q, Qf=spec.Qf, R=spec.R,
                                  lam=spec.lam, horizon=spec.horizon)


def riccati_rhs(p, S):
    """-dS/dt and -dc/dt evaluated at S."""
    GRG = p.G @ p.R_inv @ p.G.T
    dS = p.Q + p.A.T @ S + S @ p.A - 2.0 * S @ GRG @ S
    dc = float(np.trace(S @ p.noise_cov))
    return dS, dc


def solve_riccati(p, dt=None):
    """Integrate S and c backward from T to 0 with RK4 on a uniform grid."""
    T = p.horizon
    if dt is None:
        dt = T / 2000
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    K = max(1, int(np.ceil(T / dt - 1e-9)))
    h = T / K
    n = p.A.shape[0]
    S = np.empty((K + 1, n, n))
    c = np.empty(K + 1)
    S[0] = p.Qf
    c[0] = 0.0
    scale = 1.0 + np.abs(p.Qf).max()
    for k in range(K):
        Sk, ck = S[k], c[k]
        k1, l1 = riccati_rhs(p, Sk)
        k2, l2 = riccati_rhs(p, Sk + 0.5 * h * k1)
        k3, l3 = riccati_rhs(p, Sk + 0.5 * h * k2)
        k4, l4 = riccati_rhs(p, Sk + h * k3)
        Sn = Sk + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        cn = ck + (h / 6.0) * (l1 + 2 * l2 + 2 * l3 + l4)
        if not np.all(np.isfinite(Sn)) or np.abs(Sn).max() > 1e12 * scale:
            raise OracleIntegrationError(f"Riccati solution blew up at step {k + 1}")
        asym = np.abs(Sn - Sn.T).max()
        if asym > 1e-6 * max(1.0, np.abs(Sn).max()):
            raise OracleIntegrationError(f"Riccati solution lost symmetry ({asym:.2e}) at step {k + 1}")
        S[k + 1] = 0.5 * (Sn + Sn.T)
        c[k + 1] = cn
    times = T - h * np.arange(K + 1)
    times[-1] = 0.0
    return RiccatiSolution(times=times, S=S, c=c, lam=p.lam)


def oracle_value(sol, x, t):
    S, c = sol.at(t)
    x = np.asarray(x, dtype=float)
    return np.einsum("...i,ij,...j->...", x, S, x) + c


def oracle_desirability(sol, spec, x, t):
    return np.exp(-oracle_value(sol, x, t) / spec.lam)


def oracle_policy(sol, p, x, t):
    """u = -R^-1 G^T grad V = -2 R^-1 G^T S(t) x."""
    S, _ = sol.at(t)
    x = np.asarray(x, dtype=float)
    K = 2.0 * p.R_inv @ p.G.T @ S
    return -x @ K.T


def oracle_controller(sol, p):
    """Time-varying oracle feedback as a ``controller(X, t)`` callable."""
    T = sol.horizon

    def controller(X, t):
        return oracle_policy(sol, p, X, min(max(t, 0.0), T))

    return controller


def hjb_residual(sol, p, x, t):
    """HJB residual of the quadratic value at (x, t), all derivatives analytic."""
    S, _ = sol.at(t)
    dS, dc = riccati_rhs(p, S)
    x = np.asarray(x, dtype=float)
    minus_dVdt = x @ dS @ x + dc
    grad = 2.0 * S @ x
    hess = 2.0 * S
    rhs = (x @ p.Q @ x + (p.A @ x) @ grad
           - 0.5 * grad @ p.G @ p.R_inv @ p.G.T @ grad
           + 0.5 * np.trace(hess @ p.noise_cov))
    return float(minus_dVdt - rhs)
