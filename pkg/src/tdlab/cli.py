"""Command-line front end: ``tdlab run | sweep | ode | stability | envinfo | list-algos``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import harness, numkit, odelab, stability
from .envs import ENV_NAMES, build_env, stationary_distribution, true_value_function
from .errors import InvalidHyper, TdlabError, UnknownEnvironment
from .learners import FAMILIES, PRESETS, AlgoSpec, RegFn, StepSchedule
from .tdcore import METRICS, expected_matrices

ALGO_CHOICES = FAMILIES + tuple(PRESETS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 already; keep the message on stderr
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _num(text: str) -> float:
    """Float flag accepting scientific notation (``1e-3``)."""
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _count(text: str) -> int:
    """Integer flag that also accepts ``2e4`` style input."""
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if value != int(value):
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    return int(value)


def _add_algo_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", default="btd", help=f"algorithm family or preset: {', '.join(ALGO_CHOICES)} (default btd)")
    p.add_argument("--eta", type=_num, default=1.0, help="eta (default 1.0)")
    p.add_argument("--beta", type=_num, default=1.0, help="beta (default 1.0)")
    p.add_argument("--kappa", type=_num, default=1.0, help="kappa (default 1.0; presets override)")
    p.add_argument("--reg-fn", default="identity", choices=("identity", "relu", "leaky_relu"), help="TDC++ regularizer")
    p.add_argument("--slope", type=_num, default=0.01, help="leaky_relu slope (default 0.01)")
    p.add_argument("--alpha", type=_num, default=0.01, help="constant step size (default 0.01)")


def _algo_from_args(args) -> AlgoSpec:
    name = args.algo.replace("-", "_")
    if name not in ALGO_CHOICES:
        raise UsageError(f"unknown algorithm {args.algo!r}; expected one of {', '.join(ALGO_CHOICES)}")
    sched = StepSchedule("constant", alpha=args.alpha)
    reg = RegFn(args.reg_fn, args.slope)
    if name == "gtd2":
        return AlgoSpec("btd", eta=0.0, schedule=sched)
    if name == "tdc_fast":
        return AlgoSpec("tdcpp", eta=args.eta, beta=0.0, kappa=1.0 / args.eta, schedule=sched)
    if name == "tdcpp_original":
        return AlgoSpec("tdcpp", eta=args.eta, beta=args.beta, kappa=1.0 / args.eta, schedule=sched)
    return AlgoSpec(name, eta=args.eta, beta=args.beta, kappa=args.kappa, reg_fn=reg, schedule=sched)


def _check_env(name: str) -> str:
    if name.lower() not in ENV_NAMES:
        raise UnknownEnvironment(f"unknown environment {name!r}; expected one of {', '.join(ENV_NAMES)}")
    return name.lower()


def _config_from_args(args) -> harness.ExperimentConfig:
    if getattr(args, "config", None):
        cfg = harness.ExperimentConfig.from_json(Path(args.config).read_text())
        _check_env(cfg.env_name)
        return cfg
    return harness.ExperimentConfig(
        env_name=_check_env(args.env),
        algo=_algo_from_args(args),
        steps=args.steps,
        seeds=args.seeds,
        metric=args.metric,
        record_every=args.record_every,
        divergence_norm=args.divergence_norm,
        seed=args.seed,
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    res = harness.run_experiment(cfg)
    if args.out:
        harness.write_results_csv(args.out, [res])
    print(
        f"{cfg.env_name} {cfg.algo.label()} alpha={cfg.algo.alpha:g}: "
        f"{harness.format_cell(res)} (diverged {res.diverged_count}/{cfg.seeds})"
    )
    return 0


def cmd_sweep(args) -> int:
    base = _config_from_args(args)
    grid = json.loads(Path(args.grid).read_text())
    if not isinstance(grid, dict):
        raise UsageError("grid file must hold a JSON object mapping names to value lists")
    for key in ("env", "env_name"):
        for name in grid.get(key, []):
            _check_env(name)
    sweep = harness.run_sweep(base, grid, workers=args.workers)
    if args.out:
        harness.write_results_csv(args.out, sweep.results)
    if args.markdown:
        Path(args.markdown).write_text(harness.markdown_table(sweep.results, column=args.column))
    for (env,), (params, res) in sweep.best(("env",)).items():
        print(f"best {env}: {json.dumps(params, sort_keys=True)} -> {harness.format_cell(res)}")
    return 0


def cmd_ode(args) -> int:
    env = build_env(_check_env(args.env))
    km = expected_matrices(env)
    algo = _algo_from_args(args)
    sys_ = odelab.closed_loop(algo, km)
    y0 = sys_.initial_state(env.initial_xi)
    traj = odelab.simulate(sys_, y0, args.t_end, args.dt)
    if args.out:
        meta = {"env": env.name, "algo": algo.label(), "dt": repr(args.dt), "t_end": repr(args.t_end)}
        odelab.write_trajectory_csv(args.out, sys_, traj, meta, every=args.every)
    print(
        f"{env.name} {algo.label()}: t={traj.times[-1]:g} diverged={str(traj.diverged).lower()} "
        f"|y - y_eq| = {np.linalg.norm(traj.final - sys_.equilibrium):.6g}"
    )
    return 0


def stability_report(env_name: str, eta: float, beta: float, kappa: float) -> dict:
    km = expected_matrices(build_env(env_name))
    reports = [
        stability.check_eta_tdc(km, eta),
        stability.check_beta_tdc_slow(km, beta),
        stability.check_tdcpp(km, eta, beta, kappa),
        stability.check_nonlinear(km, eta, beta, kappa),
    ]
    loops = {
        "td": AlgoSpec("td"),
        "btd": AlgoSpec("btd", eta=eta),
        "tdc_fast": AlgoSpec("tdcpp", eta=eta, beta=0.0, kappa=1.0 / eta) if eta > 0 else None,
        "tdc_slow": AlgoSpec("tdc_slow", beta=beta),
        "tdc2": AlgoSpec("tdc2", eta=eta),
        "tdcpp": AlgoSpec("tdcpp", eta=eta, beta=beta, kappa=kappa) if eta > 0 else None,
    }
    hurwitz = []
    for name, spec in loops.items():
        if spec is None:
            continue
        ok, max_re = stability.is_hurwitz(odelab.closed_loop(spec, km).M)
        hurwitz.append({"algorithm": name, "hurwitz": ok, "max_real_part": max_re})
    return {
        "env": env_name,
        "eta": eta,
        "beta": beta,
        "kappa": kappa,
        "conditions": [r.to_dict() for r in reports],
        "hurwitz": hurwitz,
    }


def cmd_stability(args) -> int:
    envs = [_check_env(args.env)] if args.env else list(ENV_NAMES)
    doc = [stability_report(e, args.eta, args.beta, args.kappa) for e in envs]
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def envinfo(env_name: str) -> dict:
    env = build_env(env_name)
    d = stationary_distribution(env)
    km = expected_matrices(env, d)

    def spectrum(m):
        s = numkit.eig_general(m)
        return {"real": s.eigen_real.tolist(), "imag": s.eigen_imag.tolist()}

    return {
        "name": env.name,
        "n_states": env.n_states,
        "n_actions": env.n_actions,
        "n_features": env.n_features,
        "gamma": env.gamma,
        "d_mu": np.asarray(d).tolist(),
        "v_true": true_value_function(env).tolist(),
        "xi_star": km.xi_star.tolist(),
        "initial_xi": env.initial_xi.tolist(),
        "spectrum_A": spectrum(km.A),
        "spectrum_C": spectrum(km.C),
    }


def cmd_envinfo(args) -> int:
    _emit(json.dumps(envinfo(_check_env(args.env)), indent=2) + "\n", args.out)
    return 0


def cmd_list_algos(args) -> int:
    for fam in FAMILIES:
        print(fam)
    for name, desc in PRESETS.items():
        print(f"{name}  ({desc})")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tdlab", description="Off-policy linear TD laboratory.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def experiment_flags(sp):
        sp.add_argument("--env", default="boyan", help=f"environment: {', '.join(ENV_NAMES)} (default boyan)")
        _add_algo_flags(sp)
        sp.add_argument("--steps", type=_count, default=20_000, help="transitions per run (default 20000)")
        sp.add_argument("--seeds", type=_count, default=30, help="independent runs (default 30)")
        sp.add_argument("--metric", default="rmsve", choices=METRICS, help="error metric (default rmsve)")
        sp.add_argument("--record-every", type=_count, default=100, help="metric curve spacing (default 100)")
        sp.add_argument("--divergence-norm", type=_num, default=1e6, help="|xi| divergence bound (default 1e6)")
        sp.add_argument("--seed", type=_count, default=0, help="global seed (default 0)")
        sp.add_argument("--config", help="ExperimentConfig JSON file; replaces the flags above")
        sp.add_argument("--out", help="results CSV path")

    sp = sub.add_parser("run", help="run one configuration over many seeds")
    experiment_flags(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a hyperparameter grid")
    experiment_flags(sp)
    sp.add_argument("--grid", required=True, help='JSON object, e.g. {"eta": [0.5, 1], "alpha": [0.01, 0.1]}')
    sp.add_argument("--markdown", help="also write a markdown table here")
    sp.add_argument("--column", default="eta", help="hyperparameter used as table columns (default eta)")
    sp.add_argument("--workers", type=_count, default=None, help="worker processes (capped by TDLAB_THREADS)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("ode", help="integrate an algorithm's closed-loop ODE")
    sp.add_argument("--env", default="baird", help="environment (default baird)")
    _add_algo_flags(sp)
    sp.add_argument("--t-end", type=_num, default=100.0, help="integration horizon (default 100)")
    sp.add_argument("--dt", type=_num, default=1e-3, help="RK4 step (default 1e-3)")
    sp.add_argument("--every", type=_count, default=1, help="write every k-th sample (default 1)")
    sp.add_argument("--out", help="trajectory CSV path")
    sp.set_defaults(func=cmd_ode)

    sp = sub.add_parser("stability", help="hyperparameter conditions and Hurwitz tests as JSON")
    sp.add_argument("--env", default=None, help="environment (default: all five)")
    sp.add_argument("--eta", type=_num, default=1.0)
    sp.add_argument("--beta", type=_num, default=1.0)
    sp.add_argument("--kappa", type=_num, default=1.0)
    sp.add_argument("--out", help="JSON path (default stdout)")
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("envinfo", help="environment summary and key matrices as JSON")
    sp.add_argument("--env", required=True)
    sp.add_argument("--out", help="JSON path (default stdout)")
    sp.set_defaults(func=cmd_envinfo)

    sp = sub.add_parser("list-algos", help="list algorithm families and presets")
    sp.set_defaults(func=cmd_list_algos)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, UnknownEnvironment, InvalidHyper) as exc:
        print(f"tdlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (TdlabError, OSError, ValueError) as exc:
        print(f"tdlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
