"""Command line: gen, train, eval, rollout, field, oracle.

Exit codes: 0 ok, 2 config, 3 simulation, 4 dataset/config metadata mismatch,
5 training divergence.
"""
import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import load_config
from .errors import ConfigError, FKControlError, MetadataMismatch
from .lqg import lq_problem_from, oracle_controller, oracle_desirability, solve_riccati
from .policy import (PolicyHandle, closed_loop_rollout, evaluate_cost, grid_points,
                     swing_up_success, vector_field_export)
from .regression import train as train_model
from .sampler import average_weights, generate_dataset, log_weights


def _out_path(cfg, args, name):
    path = cfg.output.path(name, args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _say(msg):
    print(msg, flush=True)


def cmd_gen(cfg, args):
    t0 = time.perf_counter()
    ds = generate_dataset(cfg.system, cfg.cost, cfg.sampler, threads=args.threads)
    wall = time.perf_counter() - t0
    path = _out_path(cfg, args, "dataset")
    io.write_dataset(path, ds)
    diverged = int(len(ds) * cfg.sampler.num_rollouts - ds.m_used.sum())
    _say(f"N={len(ds)} M={cfg.sampler.num_rollouts} lambda={cfg.cost.lam:g} "
         f"wall={wall:.2f}s diverged_rollouts={diverged}")
    _say(f"wrote {path}")
    return 0


def _check_meta(cfg, meta):
    expect = {"system": cfg.system.name, "cost": cfg.cost.name}
    for key, want in expect.items():
        if meta.get(key) != want:
            raise MetadataMismatch(f"dataset {key}={meta.get(key)!r} but config has {want!r}")
    for key, want in (("lambda", cfg.cost.lam), ("T", cfg.cost.horizon)):
        if not math.isclose(float(meta[key]), want, rel_tol=1e-12):
            raise MetadataMismatch(f"dataset {key}={meta[key]} but config has {want}")


def cmd_train(cfg, args):
    ds_path = Path(args.dataset) if args.dataset else cfg.output.path("dataset", args.out)
    try:
        ds = io.read_dataset(ds_path)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {ds_path}: {exc}") from None
    _check_meta(cfg, ds.meta)
    model, report = train_model(ds, cfg.train, angle_axes=cfg.system.angle_axes,
                                lam=cfg.cost.lam, R=cfg.cost.R)
    model_path = _out_path(cfg, args, "model")
    io.write_model(model_path, model)
    epochs = np.arange(len(report.losses))
    gn = np.concatenate([[np.nan], report.grad_norms])
    io.write_csv(_out_path(cfg, args, "loss"), ["epoch", "loss", "grad_norm"],
                 np.column_stack([epochs, report.losses, gn]))
    _say(f"layer_dims={list(model.params.layer_dims)} initial_loss={report.initial_loss:.6g} "
         f"final_loss={report.final_loss:.6g}")
    _say(f"wrote {model_path}")
    return 0


def _load_policy(cfg, args):
    path = Path(args.model) if args.model else cfg.output.path("model", args.out)
    try:
        model = io.read_model(path)
    except OSError as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from None
    if model.system != cfg.system.name:
        raise MetadataMismatch(f"model was trained for {model.system!r}, config has {cfg.system.name!r}")
    return PolicyHandle(model, cfg.system, cfg.cost, psi_floor=cfg.policy.psi_floor, clamp=cfg.policy.clamp)


def _x0s(cfg):
    if cfg.policy.x0:
        return [np.asarray(x, dtype=float) for x in cfg.policy.x0]
    return [0.5 * (cfg.system.lower + cfg.system.upper)]


def _duration(cfg):
    return cfg.policy.duration if cfg.policy.duration is not None else cfg.cost.horizon


def cmd_eval(cfg, args):
    h = _load_policy(cfg, args)
    pol = cfg.policy
    for x0 in _x0s(cfg):
        J, se = evaluate_cost(cfg.system, cfg.cost, h, x0, pol.dt, pol.noise_rollouts,
                              seed=pol.noise_seed, duration=_duration(cfg))
        _say(f"x0={np.array2string(x0, precision=4)} J={J:.6g} +- {se:.3g}")
        if pol.swing_up:
            seeds = [None] if pol.noise_rollouts == 0 else [pol.noise_seed + k for k in range(pol.noise_rollouts)]
            for s in seeds:
                r = closed_loop_rollout(cfg.system, cfg.cost, h, x0, pol.dt, _duration(cfg), noise=s)
                label = "off" if s is None else s
                _say(f"  swing_up noise={label} success={swing_up_success(r)}")
    if pol.oracle:
        _oracle_table(cfg, h)
    return 0


def _oracle_table(cfg, h):
    p = lq_problem_from(cfg.system, cfg.cost)
    sol = solve_riccati(p)
    g = cfg.policy.oracle_grid
    X = grid_points(g["lower"], g["upper"], g["counts"])
    logw, ok = log_weights(cfg.system, cfg.cost, X, np.arange(len(X)), int(g["M"]), cfg.sampler.dt,
                           cfg.sampler.seed, noise_scaling=cfg.sampler.noise_scaling)
    psi_hat, _ = average_weights(logw, ok)
    psi_model = h.model.value(X)
    psi_true = oracle_desirability(sol, cfg.cost, X, 0.0)
    _say("x | psi_hat psi_model psi_oracle | rel_err_hat rel_err_model")
    for x, a, b, c in zip(X, psi_hat, psi_model, psi_true):
        _say(f"{np.array2string(x, precision=3)} | {a:.5g} {b:.5g} {c:.5g} | "
             f"{abs(a - c) / c:.3g} {abs(b - c) / c:.3g}")
    for x0 in _x0s(cfg):
        J, _ = evaluate_cost(cfg.system, cfg.cost, None, x0, cfg.policy.dt,
                             duration=_duration(cfg), controller=oracle_controller(sol, p))
        _say(f"oracle x0={np.array2string(x0, precision=4)} J={J:.6g}")


def cmd_rollout(cfg, args):
    h = _load_policy(cfg, args)
    pol = cfg.policy
    noise = pol.noise_seed if pol.noise_rollouts > 0 else None
    rows = []
    for run, x0 in enumerate(_x0s(cfg)):
        r = closed_loop_rollout(cfg.system, cfg.cost, h, x0, pol.dt, _duration(cfg), noise=noise)
        K = len(r.controls)
        u = np.vstack([r.controls, np.full((1, cfg.system.m), np.nan)])
        # instantaneous l + u'Ru/2; the last row carries the terminal cost
        run_cost = np.concatenate([r.running_cost / np.diff(r.times), [r.terminal_cost]])
        rows.append(np.column_stack([np.full(K + 1, run), r.times, r.states, u, run_cost]))
        _say(f"run={run} J={r.cost:.6g}")
    n, m = cfg.system.n, cfg.system.m
    header = ["run", "t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)] + ["running_cost"]
    path = _out_path(cfg, args, "rollout")
    io.write_csv(path, header, np.vstack(rows))
    _say(f"wrote {path}")
    return 0


def cmd_field(cfg, args):
    h = _load_policy(cfg, args)
    table = vector_field_export(cfg.system, h, (cfg.system.lower, cfg.system.upper, cfg.policy.field_counts))
    n = cfg.system.n
    path = _out_path(cfg, args, "field")
    io.write_csv(path, [f"x{i + 1}" for i in range(n)] + [f"dx{i + 1}" for i in range(n)], table)
    _say(f"wrote {path} ({len(table)} points)")
    return 0


def cmd_oracle(cfg, args):
    try:
        p = lq_problem_from(cfg.system, cfg.cost)
    except FKControlError as exc:
        raise ConfigError(f"oracle needs a linear system with a quadratic cost: {exc}") from None
    sol = solve_riccati(p)
    n = p.A.shape[0]
    base = cfg.output.path("oracle", args.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    s_cols = [f"S{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    io.write_csv(f"{base}_riccati.csv", ["t"] + s_cols + ["c"],
                 np.column_stack([sol.times, sol.S.reshape(len(sol.times), -1), sol.c]))
    X = grid_points(cfg.system.lower, cfg.system.upper, cfg.policy.field_counts)
    psi = oracle_desirability(sol, cfg.cost, X, 0.0)
    io.write_csv(f"{base}_psi.csv", [f"x{i + 1}" for i in range(n)] + ["psi"], np.column_stack([X, psi]))
    _say(f"S(0)={np.array2string(sol.S[-1], precision=6)} c(0)={sol.c[-1]:.6g}")
    _say(f"wrote {base}_riccati.csv and {base}_psi.csv")
    return 0


COMMANDS = {
    "gen": (cmd_gen, "sample the desirability dataset"),
    "train": (cmd_train, "fit the desirability model to a dataset"),
    "eval": (cmd_eval, "closed-loop cost, swing-up and oracle reports"),
    "rollout": (cmd_rollout, "write a closed-loop trajectory CSV"),
    "field": (cmd_field, "write the closed-loop vector field CSV"),
    "oracle": (cmd_oracle, "write the LQG Riccati solution and desirability grid"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fkcontrol", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="experiment config (YAML or JSON)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (results do not depend on it)")
    parser.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        if name == "train":
            p.add_argument("--dataset", default=None, help="dataset CSV (default: output dir)")
        if name in ("eval", "rollout", "field"):
            p.add_argument("--model", default=None, help="model JSON (default: output dir)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command][0](cfg, args)
    except FKControlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
