"""Swing-up entry times for the pendulum under cost/noise variants.

    python bench/pendulum_variants.py [--seeds 5] [--duration 20] [--epochs 1000]

Each variant uses N=10000, M=10, lambda=20, dt=0.01, T=1.2 and a 3-32-32-1
network. One dataset per variant (sampler seed 0); the training seed varies.
Prints the first time |theta| < 0.3 and |theta_dot| < 1 hold for 1 s, from
(pi, 0) with noise off, or "-" if that never happens within the duration.
"""
import argparse
import math
import time

import numpy as np

from fkcontrol.cost import make_cost
from fkcontrol.dynamics import make_pendulum
from fkcontrol.policy import PolicyHandle, closed_loop_rollout, reached_and_held
from fkcontrol.regression import TrainConfig, train
from fkcontrol.sampler import RolloutConfig, generate_dataset

VARIANTS = {
    "quadratic/sde": ("pendulum_swingup", "sde"),
    "quadratic/per_step": ("pendulum_swingup", "per_step"),
    "wrapped/sde": ("pendulum_swingup_wrapped", "sde"),
    "wrapped/per_step": ("pendulum_swingup_wrapped", "per_step"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--duration", type=float, default=20.0)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--variants", nargs="*", default=list(VARIANTS), choices=list(VARIANTS))
    args = ap.parse_args()
    system = make_pendulum()
    for name in args.variants:
        preset, noise = VARIANTS[name]
        spec = make_cost(preset, 20.0, 1.2, np.eye(1))
        t0 = time.perf_counter()
        ds = generate_dataset(system, spec, RolloutConfig(dt=0.01, num_rollouts=10, num_states=10000, seed=0,
                                                          noise_scaling=noise))
        entries = []
        for seed in range(args.seeds):
            model, _ = train(ds, TrainConfig(epochs=args.epochs, seed=seed), angle_axes=(0,), lam=20.0, R=spec.R)
            r = closed_loop_rollout(system, spec, PolicyHandle(model, system, spec),
                                    np.array([math.pi, 0.0]), 0.01, args.duration)
            t = reached_and_held(r, (0.3, 1.0), 1.0, angle_axes=(0,))
            entries.append("-" if t is None else f"{t:.2f}")
        print(f"{name:20s} entry times [s]: {' '.join(entries)}   ({time.perf_counter() - t0:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
