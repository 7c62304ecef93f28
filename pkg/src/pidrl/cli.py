"""Command-line interface: ``pidrl <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure (or every
run diverged), 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import analysis
from .environments import ENVIRONMENTS, GarnetSpec, garnet, make_environment
from .harness import (
    ConfigError,
    ExperimentConfig,
    emit_aggregate_csv,
    emit_csv,
    emit_svg,
    grid_search,
    load_config,
    run_experiment,
)
from .learning import ALGORITHMS, SAMPLING_MODES, is_control
from .mdp import exact_value_control, exact_value_pe, load_mdp, save_mdp, uniform_policy
from .planning import Gains, pid_vi_run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _env_flags(p):
    p.add_argument("--env", choices=ENVIRONMENTS, default=None)
    p.add_argument("--mdp-file", default=None, help="JSON MDP (uniform policy for evaluation)")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--garnet-states", type=int, default=None)
    p.add_argument("--garnet-actions", type=int, default=None)
    p.add_argument("--garnet-branching", type=int, default=None)
    p.add_argument("--garnet-reward-states", type=int, default=None)
    p.add_argument("--garnet-seed", type=int, default=None)


def _learning_flags(p, with_algo=True):
    if with_algo:
        p.add_argument("--algo", choices=ALGORITHMS, default=None)
    p.add_argument("--gains", default=None, help="kp,ki,kd[,alpha,beta]")
    p.add_argument("--lr-v", default=None, help="eps[,M]: mu(k) = min(eps, M/k)")
    p.add_argument("--lr-z", default=None)
    p.add_argument("--lr-vp", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sampling", choices=SAMPLING_MODES, default=None)
    p.add_argument("--n-mdps", type=int, default=None)
    p.add_argument("--adapt-gains", action="store_true", default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--eps-norm", type=float, default=None)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default $PIDRL_JOBS or 1)")


def _output_flags(p):
    p.add_argument("--out", default=None, help="long-form CSV (default stdout)")
    p.add_argument("--agg-out", default=None, help="aggregate CSV step,mean,stderr")
    p.add_argument("--svg", default=None, help="SVG chart of the aggregate")


CONFIG_KEYS = ("env", "mdp_file", "gamma", "garnet_states", "garnet_actions", "garnet_branching",
               "garnet_reward_states", "garnet_seed", "n_mdps", "algo", "gains", "lr_v", "lr_z",
               "lr_vp", "adapt_gains", "eta", "lam", "eps_norm", "steps", "eval_every", "runs",
               "seed", "sampling")


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k, None) is not None}


def _load_problem(args, control: bool):
    if args.mdp_file:
        mdp = load_mdp(args.mdp_file)
        policy = uniform_policy(mdp)
    else:
        gamma = args.gamma if args.gamma is not None else 0.9
        env = args.env or "chain-walk"
        kw = {}
        if env == "garnet":
            spec = ExperimentConfig()
            kw = dict(n_states=args.garnet_states or spec.garnet_states,
                      n_actions=args.garnet_actions or spec.garnet_actions,
                      branching=args.garnet_branching or spec.garnet_branching,
                      n_reward_states=args.garnet_reward_states if args.garnet_reward_states is not None
                      else spec.garnet_reward_states,
                      seed=args.garnet_seed or 0)
        mdp, policy = make_environment(env, gamma, **kw)
    exact = exact_value_control(mdp) if control else exact_value_pe(mdp, policy)
    return mdp, policy, exact


def _write_results(res, args) -> int:
    emit_csv(res.runs, args.out or sys.stdout, res.mdp_index)
    if args.agg_out:
        emit_aggregate_csv(res.aggregate, args.agg_out)
    if args.svg:
        emit_svg({res.config.algo: res.aggregate}, args.svg, title=res.config.env)
    agg = res.aggregate
    print(f"runs={agg.n_included + agg.n_diverged} diverged={agg.n_diverged}", file=sys.stderr)
    return EXIT_RUNTIME if res.all_diverged else EXIT_OK


def cmd_plan(args) -> int:
    control = args.problem == "control"
    mdp, policy, exact = _load_problem(args, control)
    gains = Gains.parse(args.gains) if args.gains else Gains()
    eta = args.eta if args.adapt_gains else None
    if args.adapt_gains and eta is None:
        raise ConfigError("--adapt-gains needs --eta")
    res = pid_vi_run(mdp, gains, policy=None if control else policy, k_max=args.iters,
                     tol=args.tol, exact=exact, adapt_eta=eta)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "error", "kp", "ki", "kd"])
        for k, (err, g) in enumerate(zip(res.errors, res.gains)):
            w.writerow([k, repr(err)] + [repr(x) for x in g])
    finally:
        if args.out:
            fh.close()
    if res.diverged:
        print(f"diverged after {res.iterations} iterations", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _learning_command(args, control: bool) -> int:
    base = ExperimentConfig(algo="q" if control else "td")
    cfg = base.override(**_overrides(args))
    if is_control(cfg.algo) != control:
        raise ConfigError(f"algorithm {cfg.algo!r} does not solve the {'control' if control else 'evaluation'} problem")
    return _write_results(run_experiment(cfg, args.jobs), args)


def cmd_evaluate(args) -> int:
    return _learning_command(args, control=False)


def cmd_control(args) -> int:
    return _learning_command(args, control=True)


def _parse_scan(text):
    parts = text.split(";")
    if len(parts) != 3:
        raise ConfigError("--scan-gains expects 'kp,..;ki,..;kd,..'")
    return [[float(v) for v in p.split(",")] for p in parts]


def cmd_analyze(args) -> int:
    mdp, policy, v_pi = _load_problem(args, control=False)
    gains = Gains.parse(args.gains) if args.gains else Gains()
    report = analysis.spectral_report(mdp, policy, gains)
    det = analysis.d_determinism(mdp, policy, args.reward_noise)
    v_inf = float(np.max(np.abs(v_pi)))
    n = mdp.n_states
    out = {
        "gains": dict(zip(("kappa_p", "kappa_i", "kappa_d", "alpha", "beta"), gains.as_tuple())),
        "spectral": report.to_dict(),
        "determinism": {"d": det.d, "reward_term": det.reward_term, "transition_term": det.transition_term},
        "noise_bounds": {
            "v_inf": v_inf,
            "scalar": analysis.noise_bound_scalar(det.d, mdp.gamma, v_inf),
            "td": analysis.noise_bound_td(det.d, n, mdp.gamma, v_inf),
            "pid": analysis.noise_bound_pid(det.d, n, mdp.gamma, gains, v_inf),
        },
        "prop1_from_zero": {
            "td": analysis.prop1_ratio_td(v_inf, v_inf, n, mdp.gamma, det.d),
            "pid": analysis.prop1_ratio_pid(v_inf, v_inf, n, mdp.gamma, det.d, gains),
        },
    }
    if args.scan_gains:
        kp, ki, kd = _parse_scan(args.scan_gains)
        out["scan"] = [
            {"kp": g.kappa_p, "ki": g.kappa_i, "kd": g.kappa_d,
             "spectral_radius": r.spectral_radius, "max_real_part": r.max_real_part}
            for g, r in analysis.scan_gains(mdp, policy, kp, ki, kd, gains.alpha, gains.beta)
        ]
    json.dump(_finite(out), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _finite(obj):
    """Replace non-finite floats by None so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def cmd_garnet_gen(args) -> int:
    spec = GarnetSpec(args.garnet_states, args.garnet_actions, args.garnet_branching,
                      args.garnet_reward_states, args.garnet_seed)
    mdp, _ = garnet(spec, args.gamma)
    save_mdp(mdp, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config).override(**_overrides(args))
    return _write_results(run_experiment(cfg, args.jobs), args)


def cmd_grid_search(args) -> int:
    cfg = load_config(args.config).override(**_overrides(args))
    grids = None
    if args.grid:
        with open(args.grid) as fh:
            grids = json.load(fh)
        if not isinstance(grids, dict):
            raise ConfigError("grid file must map config keys to lists")
    res = grid_search(cfg, grids, args.jobs)
    if args.out:
        keys = list(res.table[0])
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in res.table:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
    json.dump(res.best.to_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pidrl", description="PID-accelerated TD learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="PID value iteration with the model")
    _env_flags(p)
    p.add_argument("--problem", choices=("pe", "control"), default="pe")
    p.add_argument("--gains", default=None)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--adapt-gains", action="store_true")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plan)

    for name, func, text in (("evaluate", cmd_evaluate, "sample-based policy evaluation"),
                             ("control", cmd_control, "sample-based control")):
        p = sub.add_parser(name, help=text)
        _env_flags(p)
        _learning_flags(p)
        _output_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("analyze", help="spectral report, d-determinism and noise bounds")
    _env_flags(p)
    p.add_argument("--gains", default=None)
    p.add_argument("--scan-gains", default=None, help="'kp,..;ki,..;kd,..' grid")
    p.add_argument("--reward-noise", choices=("transition", "marginal"), default="transition")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("garnet-gen", help="write a random Garnet MDP as JSON")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--garnet-states", type=int, default=50)
    p.add_argument("--garnet-actions", type=int, default=3)
    p.add_argument("--garnet-branching", type=int, default=5)
    p.add_argument("--garnet-reward-states", type=int, default=10)
    p.add_argument("--garnet-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_garnet_gen)

    p = sub.add_parser("experiment", help="run a JSON experiment config")
    p.add_argument("config")
    _env_flags(p)
    _learning_flags(p)
    _output_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("grid-search", help="grid search over config fields")
    p.add_argument("config")
    p.add_argument("--grid", default=None, help="JSON {key: [values]}; default: published learning-rate grids")
    _env_flags(p)
    _learning_flags(p)
    p.add_argument("--out", default=None, help="CSV of the full table")
    p.set_defaults(func=cmd_grid_search)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
