"""Time the numba kernels against the pure-numpy fallback.

    python bench/benchmark.py [--repeat 3]

Both backends produce the same samples (see tests), so only speed is compared.
Compilation time is excluded by a warm-up call.
"""
import argparse
import time

import numpy as np

from fkcontrol import _accel
from fkcontrol.cost import pendulum_cost, state_quadratic_cost
from fkcontrol.dynamics import make_double_integrator, make_pendulum
from fkcontrol.regression import Featurizer, TrainConfig, fit_mlp
from fkcontrol.sampler import RolloutConfig, generate_dataset


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    pend, pend_cost = make_pendulum(), pendulum_cost()
    di, di_cost = make_double_integrator(), state_quadratic_cost()
    pend_cfg = RolloutConfig(dt=0.01, num_rollouts=10, num_states=2000, seed=0)
    di_cfg = RolloutConfig(dt=0.005, num_rollouts=1024, num_states=16, seed=0)
    rng = np.random.default_rng(0)
    X = rng.uniform(pend.lower, pend.upper, size=(10000, 2))
    F = Featurizer(2, (0,)).fit(X)(X)
    y = np.exp(-np.sum(X ** 2, axis=1) / 20)
    train_cfg = TrainConfig(epochs=5)
    return [
        ("sampler: pendulum N=2000 M=10 (240k steps x rollouts)",
         lambda: generate_dataset(pend, pend_cost, pend_cfg, threads=1)),
        ("sampler: double integrator N=16 M=1024 dt=0.005",
         lambda: generate_dataset(di, di_cost, di_cfg, threads=1)),
        ("training: 5 epochs, N=10000, 3-32-32-1, batch 128",
         lambda: fit_mlp(F, y, train_cfg)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"{'case':58s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup")
    for name, fn in cases():
        row = {}
        for b in backends:
            _accel.set_backend(b)
            fn()  # warm-up / compile
            row[b] = best_of(fn, args.repeat)
        speed = f"{row['numpy'] / row['numba']:8.1f}x" if "numba" in row else "       -"
        print(f"{name:58s} " + " ".join(f"{row[b]:9.3f}s" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
