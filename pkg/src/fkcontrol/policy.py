"""Feedback policy from a desirability model, closed-loop simulation and cost.

The controller is u = lambda R^-1 G(x)^T grad psi(x) / psi(x), with psi
floored at ``psi_floor`` so states where the model is nearly zero give large
but finite inputs.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cost import cholesky_rinv, control_penalty
from .dynamics import wrap_angle
from .errors import ParameterError, PolicyEvaluationError, PreconditionError, RolloutDiverged
from .rng import STREAM_CLOSED_LOOP, keyed_normals
from .sampler import time_steps


@dataclass(frozen=True, eq=False)
class PolicyHandle:
    """``model`` is anything with ``value_and_grad(X) -> (psi (B,), grad (B, n))``."""
    model: object
    system: object
    spec: object
    psi_floor: float = 1e-6
    clamp: Optional[float] = None

    def __post_init__(self):
        if not self.psi_floor > 0:
            raise ParameterError(f"psi_floor must be positive, got {self.psi_floor}")
        if self.clamp is not None and not self.clamp > 0:
            raise ParameterError("clamp must be positive when set")


def policy_eval(h, x):
    """Control for one state (n,) or a batch (B, n)."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    psi, grad = h.model.value_and_grad(X)
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(psi))):
        raise PolicyEvaluationError("desirability model returned a non-finite value or gradient")
    G = h.system.input_matrix(X)
    gtg = np.einsum("bnm,bn->bm", G, grad)
    u = h.spec.lam * (gtg @ h.spec.R_inv.T) / np.maximum(psi, h.psi_floor)[:, None]
    if h.clamp is not None:
        u = np.clip(u, -h.clamp, h.clamp)
    return u[0] if x.ndim == 1 else u


def policy_controller(h):
    """Wrap a policy handle as a ``controller(X, t)`` callable."""
    return lambda X, t: policy_eval(h, X)


@dataclass(eq=False)
class ClosedLoopResult:
    times: np.ndarray         # (K+1,)
    states: np.ndarray        # (K+1, n)
    controls: np.ndarray      # (K, m)
    running_cost: np.ndarray  # (K,) integrand times step size
    terminal_cost: float
    noise_seed: Optional[int]

    @property
    def cost(self):
        return float(self.running_cost.sum() + self.terminal_cost)


def simulate(system, spec, controller, x0s, dt, duration, noise_seed=None, rollout_ids=None):
    """Batched closed-loop Euler(-Maruyama) simulation.

    Returns times (K+1,), states (K+1, B, n), controls (K, B, m),
    running cost (K, B) and terminal cost (B,).
    """
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    if not duration > 0:
        raise PreconditionError(f"duration must be positive, got {duration}")
    X = np.atleast_2d(np.asarray(x0s, dtype=float)).copy()
    B = len(X)
    steps = time_steps(duration, dt)
    K = len(steps)
    times = np.concatenate([[0.0], np.cumsum(steps)])
    states = np.empty((K + 1, B, system.n))
    controls = np.empty((K, B, system.m))
    running = np.empty((K, B))
    states[0] = X
    if noise_seed is not None:
        gain = math.sqrt(spec.lam) * cholesky_rinv(spec).L
        rids = np.arange(B) if rollout_ids is None else np.asarray(rollout_ids)
    for k, h in enumerate(steps):
        U = np.atleast_2d(controller(X, times[k]))
        G = system.input_matrix(X)
        running[k] = (np.asarray(spec.running(X)) + control_penalty(spec, U)) * h
        dX = (system.drift(X) + np.einsum("bnm,bm->bn", G, U)) * h
        if noise_seed is not None:
            xi = keyed_normals(noise_seed, k, rids, 0, system.m, stream=STREAM_CLOSED_LOOP)
            dX = dX + np.einsum("bnm,bm->bn", G, math.sqrt(h) * (xi @ gain.T))
        X = X + dX
        if not np.all(np.isfinite(X)):
            raise RolloutDiverged(f"closed-loop state became non-finite at step {k + 1}", step=k + 1)
        controls[k] = U
        states[k + 1] = X
    terminal = np.asarray(spec.terminal(X), dtype=float).reshape(B)
    return times, states, controls, running, terminal


def closed_loop_rollout(system, spec, h, x0, dt, duration, noise=None, controller=None):
    """Simulate one closed loop from x0. ``noise`` is None (off) or an integer seed."""
    ctrl = controller if controller is not None else policy_controller(h)
    times, states, controls, running, terminal = simulate(system, spec, ctrl, [x0], dt, duration,
                                                          noise_seed=noise)
    return ClosedLoopResult(times, states[:, 0], controls[:, 0], running[:, 0], float(terminal[0]), noise)


def evaluate_cost(system, spec, h, x0, dt, n_noise_rollouts=0, seed=0, duration=None, controller=None):
    """Mean and standard error of the realized cost. Zero rollouts means noise off."""
    ctrl = controller if controller is not None else policy_controller(h)
    duration = spec.horizon if duration is None else duration
    if n_noise_rollouts == 0:
        _, _, _, running, terminal = simulate(system, spec, ctrl, [x0], dt, duration)
        return float(running.sum() + terminal[0]), 0.0
    x0s = np.repeat(np.atleast_2d(np.asarray(x0, dtype=float)), n_noise_rollouts, axis=0)
    _, _, _, running, terminal = simulate(system, spec, ctrl, x0s, dt, duration, noise_seed=seed)
    J = running.sum(axis=0) + terminal
    se = float(J.std(ddof=1) / math.sqrt(len(J))) if len(J) > 1 else 0.0
    return float(J.mean()), se


def grid_points(lower, upper, counts):
    axes = [np.linspace(lo, hi, int(c)) for lo, hi, c in zip(lower, upper, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def vector_field_export(system, h, grid):
    """Rows (x..., xdot...) of the closed-loop field f(x) + G(x) pi(x).

    ``grid`` is either an array of points or a ``(lower, upper, counts)`` triple.
    """
    if isinstance(grid, tuple) and len(grid) == 3:
        X = grid_points(*grid)
    else:
        X = np.atleast_2d(np.asarray(grid, dtype=float))
    U = policy_eval(h, X)
    Xdot = system.drift(X) + np.einsum("bnm,bm->bn", system.input_matrix(X), np.atleast_2d(U))
    return np.hstack([X, Xdot])


def reached_and_held(result, targets, hold, angle_axes=()):
    """First time at which |x_i| < targets[i] for all i and stays so for ``hold`` seconds.

    Angle axes are wrapped to [-pi, pi) before the check. Returns the entry
    time or None.
    """
    X = result.states.copy()
    for i in angle_axes:
        X[:, i] = wrap_angle(X[:, i])
    inside = np.all(np.abs(X) < np.asarray(targets, dtype=float), axis=1)
    t = result.times
    start = None
    for k in range(len(t)):
        if inside[k]:
            if start is None:
                start = k
            if t[k] - t[start] >= hold - 1e-9:
                return float(t[start])
        else:
            start = None
    return None


def swing_up_success(result, angle_tol=0.3, rate_tol=1.0, hold=1.0):
    return reached_and_held(result, (angle_tol, rate_tol), hold, angle_axes=(0,)) is not None
