"""Monte-Carlo desirability samples from random-input rollouts.

Each rollout integrates dX = f(X) ds + G(X) sqrt(lambda) L dW by
Euler-Maruyama, accumulates the running cost with the left-endpoint rule and
returns the log-weight -(int l + phi(X_T)) / lambda. Averaging exp(log-weight)
over M rollouts estimates the desirability at the start state.

Noise for step k of rollout j started from state i is a pure function of
(seed, k, j, i), so results do not depend on chunking or thread count.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _accel
from ._accel import njit
from .cost import cholesky_rinv
from .errors import EstimationError, ParameterError, PreconditionError, RolloutDiverged
from .rng import STREAM_SAMPLER, fill_normals_nb, keyed_normals, split_seed

DEFAULT_SAFETY_FACTOR = 10.0
# "sde": Brownian increment, input noise std sqrt(lambda / dt) per step.
# "per_step": input drawn from N(0, lambda R^-1) and held for the step.
NOISE_SCALINGS = ("sde", "per_step")


@dataclass(frozen=True)
class RolloutConfig:
    dt: float
    num_rollouts: int
    num_states: int
    seed: int = 0
    sampling_mode: str = "uniform"
    safety_factor: float = DEFAULT_SAFETY_FACTOR
    on_diverge: str = "discard"
    noise_scaling: str = "sde"

    def validate(self, horizon):
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.dt > horizon:
            raise ParameterError(f"dt={self.dt} exceeds the horizon {horizon}")
        if self.num_rollouts < 1 or self.num_states < 1:
            raise ParameterError("num_rollouts and num_states must be at least 1")
        if self.sampling_mode not in ("uniform", "grid"):
            raise ParameterError(f"sampling_mode must be 'uniform' or 'grid', got {self.sampling_mode!r}")
        if self.on_diverge not in ("discard", "abort"):
            raise ParameterError(f"on_diverge must be 'discard' or 'abort', got {self.on_diverge!r}")
        if self.noise_scaling not in NOISE_SCALINGS:
            raise ParameterError(f"noise_scaling must be one of {NOISE_SCALINGS}, got {self.noise_scaling!r}")
        split_seed(self.seed)


class NoiseStream(NamedTuple):
    seed: int
    state_index: int
    rollout_index: int


@dataclass(frozen=True)
class DesirabilitySample:
    x: np.ndarray
    psi_hat: float
    m_used: int


@dataclass(eq=False)
class Dataset:
    states: np.ndarray
    psi_hat: np.ndarray
    m_used: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.psi_hat)

    @property
    def samples(self):
        return [DesirabilitySample(x, float(p), int(k))
                for x, p, k in zip(self.states, self.psi_hat, self.m_used)]


def time_steps(horizon, dt):
    """Step sizes covering [0, horizon]; the last step is shortened if dt does not divide it."""
    ratio = horizon / dt
    k = int(round(ratio))
    if abs(ratio - k) <= 1e-9 * max(1.0, ratio):
        return np.full(max(k, 1), float(dt))
    k = int(math.ceil(ratio))
    steps = np.full(k, float(dt))
    steps[-1] = horizon - (k - 1) * dt
    return steps


def safety_box(model, factor=DEFAULT_SAFETY_FACTOR):
    center = 0.5 * (model.lower + model.upper)
    half = 0.5 * (model.upper - model.lower) * factor
    return center - half, center + half


# -- kernels -----------------------------------------------------------------

@njit(nogil=True, cache=True)
def _log_weights_nb(x0s, state_ids, j0, M, steps, held, gain, lam, k0, k1,
                    drift, inmat, dyn_p, running, terminal, cost_p,
                    box_lo, box_hi, out_w, out_ok):
    B, n = x0s.shape
    m = gain.shape[0]
    x = np.empty(n)
    f = np.empty(n)
    G = np.empty((n, m))
    xi = np.empty(m)
    w = np.empty(m)
    for a in range(B):
        sid = state_ids[a]
        for jj in range(M):
            j = j0 + jj
            for i in range(n):
                x[i] = x0s[a, i]
            acc = 0.0
            ok = True
            for k in range(steps.shape[0]):
                h = steps[k]
                acc += running(x, cost_p) * h
                drift(x, dyn_p, f)
                inmat(x, dyn_p, G)
                fill_normals_nb(k0, k1, k, j, sid, 0, xi)
                sh = h if held else math.sqrt(h)
                for r in range(m):
                    s = 0.0
                    for c in range(m):
                        s += gain[r, c] * xi[c]
                    w[r] = sh * s
                for i in range(n):
                    s = 0.0
                    for r in range(m):
                        s += G[i, r] * w[r]
                    x[i] = x[i] + (f[i] * h + s)
                for i in range(n):
                    if not (x[i] >= box_lo[i] and x[i] <= box_hi[i]):
                        ok = False
                if not ok:
                    break
            if ok:
                out_w[a, jj] = -(acc + terminal(x, cost_p)) / lam
                if not np.isfinite(out_w[a, jj]):
                    ok = False
            if not ok:
                out_w[a, jj] = -np.inf
            out_ok[a, jj] = ok


def _log_weights_np(model, spec, x0s, state_ids, j0, M, steps, held, gain, seed, box_lo, box_hi):
    B, n = x0s.shape
    m = gain.shape[0]
    X = np.repeat(x0s, M, axis=0)
    sid = np.repeat(np.asarray(state_ids, dtype=np.uint64), M)
    rid = np.tile(np.arange(j0, j0 + M, dtype=np.uint64), B)
    acc = np.zeros(B * M)
    ok = np.ones(B * M, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k, h in enumerate(steps):
            acc = acc + np.asarray(spec.running(X), dtype=float) * h
            xi = keyed_normals(seed, k, rid, sid, m, stream=STREAM_SAMPLER)
            w = (h if held else math.sqrt(h)) * (xi @ gain.T)
            X = X + (model.drift(X) * h + np.einsum("bir,br->bi", model.input_matrix(X), w))
            inside = np.all((X >= box_lo) & (X <= box_hi), axis=1)
            ok &= inside
            X[~ok] = x0s[0]  # park diverged rows so they stay finite
        logw = -(acc + np.asarray(spec.terminal(X), dtype=float)) / spec.lam
    ok &= np.isfinite(logw)
    logw[~ok] = -np.inf
    return logw.reshape(B, M), ok.reshape(B, M)


def log_weights(model, spec, x0s, state_ids, num_rollouts, dt, seed,
                rollout_offset=0, safety_factor=DEFAULT_SAFETY_FACTOR, chol=None, noise_scaling="sde"):
    """Log-weights of shape (len(x0s), num_rollouts) and a matching success mask."""
    if noise_scaling not in NOISE_SCALINGS:
        raise ParameterError(f"noise_scaling must be one of {NOISE_SCALINGS}, got {noise_scaling!r}")
    held = noise_scaling == "per_step"
    x0s = np.ascontiguousarray(np.atleast_2d(np.asarray(x0s, dtype=float)))
    state_ids = np.ascontiguousarray(np.asarray(state_ids, dtype=np.int64).reshape(-1))
    if x0s.shape[1] != model.n or len(state_ids) != len(x0s):
        raise ParameterError("x0s must be (B, n) with one state id per row")
    if not dt > 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    if not np.all(np.isfinite(x0s)):
        raise PreconditionError("start states must be finite")
    chol = chol or cholesky_rinv(spec)
    gain = np.ascontiguousarray(math.sqrt(spec.lam) * chol.L)
    steps = time_steps(spec.horizon, dt)
    box_lo, box_hi = safety_box(model, safety_factor)
    B, M = len(x0s), int(num_rollouts)
    if _accel.numba_enabled() and model.has_jit and spec.has_jit:
        k0, k1 = split_seed(seed)
        out_w = np.empty((B, M))
        out_ok = np.empty((B, M), dtype=np.bool_)
        _log_weights_nb(x0s, state_ids, int(rollout_offset), M, steps, held, gain, float(spec.lam), k0, k1,
                        model.jit_drift, model.jit_input, model.jit_params,
                        spec.jit_running, spec.jit_terminal, spec.jit_params,
                        box_lo, box_hi, out_w, out_ok)
        return out_w, out_ok
    return _log_weights_np(model, spec, x0s, state_ids, int(rollout_offset), M, steps, held, gain,
                           seed, box_lo, box_hi)


def rollout_log_weight(model, spec, L, x0, dt, stream, safety_factor=DEFAULT_SAFETY_FACTOR,
                       noise_scaling="sde"):
    """Log-weight of one rollout; raises ``RolloutDiverged`` if it leaves the safety box."""
    w, ok = log_weights(model, spec, [x0], [stream.state_index], 1, dt, stream.seed,
                        rollout_offset=stream.rollout_index, safety_factor=safety_factor, chol=L,
                        noise_scaling=noise_scaling)
    if not ok[0, 0]:
        raise RolloutDiverged(f"rollout {stream.rollout_index} from state {stream.state_index} diverged")
    return float(w[0, 0])


def average_weights(logw, ok):
    """Mean of exp(logw) per row using a max shift; failed rollouts count as weight 0."""
    logw = np.atleast_2d(logw)
    ok = np.atleast_2d(ok)
    M = logw.shape[1]
    shift = np.max(np.where(ok, logw, -np.inf), axis=1)
    safe = np.where(np.isfinite(shift), shift, 0.0)
    total = np.sum(np.exp(np.where(ok, logw - safe[:, None], -np.inf)), axis=1)
    return np.exp(safe) * total / M, ok.sum(axis=1)


def estimate_desirability(model, spec, x, M, dt, base_seed, state_index,
                          safety_factor=DEFAULT_SAFETY_FACTOR, noise_scaling="sde"):
    if M < 1:
        raise PreconditionError(f"need at least one rollout, got M={M}")
    logw, ok = log_weights(model, spec, [x], [state_index], M, dt, base_seed,
                           safety_factor=safety_factor, noise_scaling=noise_scaling)
    psi, used = average_weights(logw, ok)
    if used[0] == 0:
        raise EstimationError(f"all {M} rollouts diverged for state {state_index}", state_index)
    return DesirabilitySample(np.asarray(x, dtype=float), float(psi[0]), int(used[0]))


def query_states(model, config):
    n = model.n
    if config.sampling_mode == "grid":
        k = max(1, int(round(config.num_states ** (1.0 / n))))
        axes = [np.linspace(lo, hi, k) for lo, hi in zip(model.lower, model.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)
    rng = np.random.default_rng(config.seed)
    return rng.uniform(model.lower, model.upper, size=(config.num_states, n))


def default_threads():
    return os.cpu_count() or 1


def generate_dataset(model, spec, config, threads=None, chunk=32):
    """Sample query states and estimate the desirability at each of them."""
    config.validate(spec.horizon)
    states = query_states(model, config)
    N, M = len(states), config.num_rollouts
    chol = cholesky_rinv(spec)
    psi = np.empty(N)
    used = np.empty(N, dtype=np.int64)

    def work(lo):
        hi = min(lo + chunk, N)
        logw, ok = log_weights(model, spec, states[lo:hi], np.arange(lo, hi), M, config.dt,
                               config.seed, safety_factor=config.safety_factor, chol=chol,
                               noise_scaling=config.noise_scaling)
        psi[lo:hi], used[lo:hi] = average_weights(logw, ok)

    starts = range(0, N, chunk)
    threads = threads or default_threads()
    if threads == 1:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))

    bad = np.flatnonzero(used == 0)
    if bad.size:
        raise EstimationError(f"all rollouts diverged for state index {bad[0]}", int(bad[0]))
    if config.on_diverge == "abort" and np.any(used < M):
        i = int(np.flatnonzero(used < M)[0])
        raise EstimationError(f"{M - used[i]} rollouts diverged for state index {i}", i)

    meta = {
        "system": model.name, "cost": spec.name, "lambda": spec.lam, "T": spec.horizon,
        "dt": config.dt, "M": M, "seed": config.seed,
    }
    if config.noise_scaling != "sde":
        meta["noise"] = config.noise_scaling
    return Dataset(states=states, psi_hat=psi, m_used=used, meta=meta)
