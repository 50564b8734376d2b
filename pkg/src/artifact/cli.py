"""Config-driven command line tying the library into reproducible runs.

Every subcommand demands an explicit ``--seed`` and derives all randomness
from it, so identical invocations produce byte-identical data files.  A flat
``key = value`` config file can hold any flag's value; flags given on the
command line win.  Runs print a JSON object with the result and a manifest;
with ``--out`` the result, manifest, and any CSV outputs are also written to
that directory.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    _substream,
    _task_pair,
    generalization_curve,
    lower_bound_constant,
    regret_curve,
    transfer_experiment,
)
from .dual import estimate_qd
from .env import (
    BanditInstance,
    BernoulliFamily,
    Gaussian,
    GaussianFamily,
    GPInstance,
    UniformFamily,
    sample_task,
)
from .errors import (
    ConfigurationError,
    DomainError,
    TapeFormatError,
    UnsupportedModelError,
)
from .policies import collect_offline_piecewise, collect_offline_uniform
from .tuner import sample_budget, tune_gp_noise, tune_with_prior, tuned_ucb

__all__ = ["cli_main", "main"]

_VALIDATION_ERRORS = (
    ConfigurationError,
    DomainError,
    TapeFormatError,
    UnsupportedModelError,
)


def _workers_fallback() -> int:
    raw = os.environ.get("BT_WORKERS")
    if raw is None:
        return 1
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"BT_WORKERS must be an integer, got {raw!r}")


def _read_config_tokens(path: str) -> list:
    """Turn ``key = value`` lines into CLI tokens; '#' starts a comment."""
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    tokens = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"config line {lineno} is not key=value: {raw.strip()!r}"
            )
        key, value = line.split("=", 1)
        flag = key.strip().replace("_", "-")
        if not flag:
            raise ConfigurationError(f"config line {lineno} has an empty key")
        tokens.extend([f"--{flag}", value.strip()])
    return tokens


def _parse_floats(text: str, flag: str) -> list:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"{flag} must be comma-separated numbers, got {text!r}")
    if not values:
        raise ConfigurationError(f"{flag} must name at least one number")
    return values


def _parse_ints(text: str, flag: str) -> list:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"{flag} must be comma-separated integers, got {text!r}")
    if not values:
        raise ConfigurationError(f"{flag} must name at least one integer")
    return values


def _family(args):
    name = args.family
    if name == "bernoulli":
        return BernoulliFamily(sigma=args.sigma, center=args.center)
    if name == "uniform":
        return UniformFamily(sigma=args.sigma)
    if name == "gaussian":
        if args.variance_min is not None or args.variance_max is not None:
            if args.variance_min is None or args.variance_max is None:
                raise ConfigurationError(
                    "variance-min and variance-max must be given together"
                )
            return GaussianFamily(
                sigma=None, variance_range=(args.variance_min, args.variance_max)
            )
        return GaussianFamily(sigma=args.sigma)
    raise ConfigurationError(f"unknown family {name!r}")


def _offline_pairs(dist, n_train: int, t_o: int, seed: int):
    if n_train < 1:
        raise ConfigurationError("n-train must be >= 1")
    return [_task_pair(dist, seed, i, t_o) for i in range(n_train)]


def _manifest(args) -> dict:
    skip = {"func", "out", "config"}
    params = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        params[key] = value
    digest = hashlib.sha256(
        json.dumps(params, sort_keys=True).encode()
    ).hexdigest()
    return {
        "subcommand": args.subcommand,
        "params": params,
        "config_hash": digest,
        "versions": {
            "artifact": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }


# ---------------------------------------------------------------------------
# Subcommand handlers: each returns the result-JSON string and may write CSVs
# into ``out`` when given.
# ---------------------------------------------------------------------------


def _run_tune(args, out):
    pairs = _offline_pairs(_family(args), args.n_train, args.t_offline, args.seed)
    result = tuned_ucb(pairs, (args.alpha_min, args.alpha_max), args.t_offline)
    return result.to_json(indent=2)


def _run_tune_prior(args, out):
    pairs = _offline_pairs(_family(args), args.n_train, args.t_offline, args.seed)
    prior_grid = [
        _parse_floats(block, "--prior-grid")
        for block in args.prior_grid.split(";")
        if block.strip()
    ]
    result = tune_with_prior(
        pairs, (args.alpha_min, args.alpha_max), prior_grid, args.t_offline
    )
    return result.to_json(indent=2)


def _gp_surface(grid_size: int, noise_var: float, h_bound: float) -> GPInstance:
    axis = np.linspace(0.0, 2.0 * math.pi, grid_size)
    xx, yy = np.meshgrid(axis, axis)
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    f = np.sin(grid[:, 0]) + np.cos(grid[:, 1]) + 2.0
    return GPInstance(grid=grid, f=f, noise_var=noise_var, h_bound=h_bound)


def _run_tune_gp(args, out):
    instance = _gp_surface(args.grid_size, args.noise_var, args.h_bound)
    tasks = [
        (instance, _substream(args.seed, 8, i)) for i in range(args.n_tasks)
    ]
    result = tune_gp_noise(
        tasks,
        (args.s_min, args.s_max),
        args.s_points,
        args.t,
        objective=args.objective,
    )
    return result.to_json(indent=2)


def _run_qd(args, out):
    estimate = estimate_qd(
        _family(args),
        args.t,
        (args.alpha_min, args.alpha_max),
        args.samples,
        args.seed,
        workers=args.workers if args.workers else _workers_fallback(),
    )
    return estimate.to_json()


def _run_regret_curve(args, out):
    grid = _parse_floats(args.grid, "--grid") if args.grid else None
    alpha_range = None
    if grid is None:
        if args.alpha_min is None or args.alpha_max is None:
            raise ConfigurationError(
                "pass either --grid or both --alpha-min and --alpha-max"
            )
        alpha_range = (args.alpha_min, args.alpha_max)
    curve = regret_curve(
        _family(args),
        n_tasks=args.n_tasks,
        horizon=args.t,
        seed=args.seed,
        rho_grid=grid,
        alpha_range=alpha_range,
        h_bound=args.h_bound,
    )
    if out is not None:
        curve.to_csv(out / "curve.csv")
    j = int(np.argmin(curve.mean_loss))
    return json.dumps(
        {
            "n_points": int(curve.param.size),
            "argmin_param": float(curve.param[j]),
            "min_mean_loss": float(curve.mean_loss[j]),
            "n_tasks": curve.n_tasks,
            "horizon": curve.horizon,
        },
        indent=2,
    )


def _run_transfer(args, out):
    alpha_range = None
    if args.alpha_min is not None or args.alpha_max is not None:
        if args.alpha_min is None or args.alpha_max is None:
            raise ConfigurationError(
                "alpha-min and alpha-max must be given together"
            )
        alpha_range = (args.alpha_min, args.alpha_max)
    result = transfer_experiment(
        _family(args),
        n_train=args.n_train,
        t_o=args.t_offline,
        alpha_grid=_parse_floats(args.grid, "--grid"),
        test_horizon=args.t,
        n_test=args.n_test,
        seed=args.seed,
        alpha_range=alpha_range,
    )
    if out is not None:
        result.to_csv(out / "traces.csv")
    return json.dumps(
        {
            "alpha_hat": float(result.tuner.param),
            "final_means": result.final_means(),
            "n_test": result.n_test,
            "horizon": result.horizon,
            "tuner": json.loads(result.tuner.to_json()),
        },
        indent=2,
    )


def _run_generalize(args, out):
    curve = generalization_curve(
        _family(args),
        n_values=_parse_ints(args.n_values, "--n-values"),
        trials=args.trials,
        t_o=args.t_offline,
        n_test=args.n_test,
        test_horizon=args.t,
        seed=args.seed,
        alpha_range=(args.alpha_min, args.alpha_max),
    )
    if out is not None:
        curve.to_csv(out / "curve.csv")
    return json.dumps(
        {
            "n_values": [int(v) for v in curve.param],
            "mean_loss": [float(v) for v in curve.mean_loss],
            "stderr": [float(v) for v in curve.stderr],
            "trials": curve.n_tasks,
        },
        indent=2,
    )


def _run_lower_bound(args, out):
    means = _parse_floats(args.means, "--means")
    sigmas = _parse_floats(args.sigmas, "--sigmas")
    if len(means) != len(sigmas):
        raise ConfigurationError("means and sigmas must have equal length")
    instance = BanditInstance(
        arms=tuple(Gaussian(m, s) for m, s in zip(means, sigmas)),
        true_means=tuple(means),
    )
    return lower_bound_constant(instance, cap=args.cap).to_json(indent=2)


def _run_collect(args, out):
    dist = _family(args)
    t_os = np.empty(args.samples)
    pieces = np.empty(args.samples)
    for i in range(args.samples):
        instance = sample_task(dist, _substream(args.seed, 9, i))
        if args.policy == "uniform":
            collect_offline_uniform(instance, args.t, _substream(args.seed, 10, i))
            t_os[i] = instance.n_arms * args.t
            pieces[i] = 1
        else:
            _, n_pieces, t_o = collect_offline_piecewise(
                instance,
                (args.alpha_min, args.alpha_max),
                args.t,
                _substream(args.seed, 10, i),
            )
            t_os[i] = t_o
            pieces[i] = n_pieces
    return json.dumps(
        {
            "policy": args.policy,
            "samples": int(args.samples),
            "mean_t_o": float(t_os.mean()),
            "ci95_t_o": float(1.96 * t_os.std(ddof=1) / math.sqrt(args.samples))
            if args.samples > 1
            else 0.0,
            "mean_pieces": float(pieces.mean()),
            "horizon": int(args.t),
        },
        indent=2,
    )


def _run_budget(args, out):
    budget = sample_budget(
        args.epsilon, args.delta, args.h, args.log_qd, args.n_arms, args.t
    )
    return budget.to_json(indent=2)


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="root RNG seed (required)")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--config", default=None, help="key = value config file")


def _add_family(parser):
    parser.add_argument(
        "--family",
        choices=["bernoulli", "uniform", "gaussian"],
        default="bernoulli",
    )
    parser.add_argument("--sigma", type=float, default=0.1)
    parser.add_argument("--center", type=float, default=0.5)
    parser.add_argument("--variance-min", type=float, default=None)
    parser.add_argument("--variance-max", type=float, default=None)


def _add_alpha_range(parser, required=True):
    parser.add_argument("--alpha-min", type=float, default=0.0 if required else None)
    parser.add_argument("--alpha-max", type=float, default=2.0 if required else None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artifact",
        description="Reproducible bandit hyperparameter-transfer experiments.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("tune", help="ERM-tune an exploration rate offline")
    _add_common(p), _add_family(p), _add_alpha_range(p)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--t-offline", type=int, default=20)
    p.set_defaults(func=_run_tune)

    p = sub.add_parser("tune-prior", help="jointly tune rate and warm start")
    _add_common(p), _add_family(p), _add_alpha_range(p)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--t-offline", type=int, default=20)
    p.add_argument(
        "--prior-grid",
        default="0,0;1,1",
        help="semicolon-separated mean vectors, e.g. '0,0;1,1'",
    )
    p.set_defaults(func=_run_tune_prior)

    p = sub.add_parser("tune-gp", help="tune a posterior noise scale for GP bandits")
    _add_common(p)
    p.add_argument("--grid-size", type=int, default=24, help="points per axis")
    p.add_argument("--noise-var", type=float, default=0.01)
    p.add_argument("--h-bound", type=float, default=4.0)
    p.add_argument("--t", type=int, default=20)
    p.add_argument("--s-min", type=float, default=1e-3)
    p.add_argument("--s-max", type=float, default=10.0)
    p.add_argument("--s-points", type=int, default=512)
    p.add_argument("--n-tasks", type=int, default=1)
    p.add_argument("--objective", choices=["regret", "reward"], default="regret")
    p.set_defaults(func=_run_tune_gp)

    p = sub.add_parser("qd", help="estimate the mean dual-loss piece count")
    _add_common(p), _add_family(p), _add_alpha_range(p)
    p.add_argument("--t", type=int, default=100)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--workers", type=int, default=None, help="default BT_WORKERS or 1")
    p.set_defaults(func=_run_qd)

    p = sub.add_parser("regret-curve", help="mean dual loss against the rate")
    _add_common(p), _add_family(p)
    _add_alpha_range(p, required=False)
    p.add_argument("--grid", default=None, help="comma-separated rate values")
    p.add_argument("--n-tasks", type=int, default=200)
    p.add_argument("--t", type=int, default=100)
    p.add_argument("--h-bound", type=float, default=math.inf)
    p.set_defaults(func=_run_regret_curve)

    p = sub.add_parser("transfer", help="race the tuned rate against corral")
    _add_common(p), _add_family(p)
    _add_alpha_range(p, required=False)
    p.add_argument("--grid", default="0.1,0.2,0.5,1,2,5,10,20,50,100")
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--t-offline", type=int, default=20)
    p.add_argument("--t", type=int, default=10000)
    p.add_argument("--n-test", type=int, default=5)
    p.set_defaults(func=_run_transfer)

    p = sub.add_parser("generalize", help="test regret against training-set size")
    _add_common(p), _add_family(p), _add_alpha_range(p)
    p.add_argument("--n-values", default="1,10,200")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--t-offline", type=int, default=20)
    p.add_argument("--n-test", type=int, default=10)
    p.add_argument("--t", type=int, default=100)
    p.set_defaults(func=_run_generalize)

    p = sub.add_parser("lower-bound", help="instance-dependent constant for Gaussian arms")
    _add_common(p)
    p.add_argument("--means", default="1,0")
    p.add_argument("--sigmas", default="1,1")
    p.add_argument("--cap", type=float, default=10.0)
    p.set_defaults(func=_run_lower_bound)

    p = sub.add_parser("collect", help="offline collection policies")
    _add_common(p), _add_family(p), _add_alpha_range(p)
    p.add_argument("--policy", choices=["uniform", "piecewise"], default="piecewise")
    p.add_argument("--t", type=int, default=100)
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=_run_collect)

    p = sub.add_parser("budget", help="sufficient training-task count")
    _add_common(p)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--h", type=float, default=1.0)
    p.add_argument("--log-qd", type=float, default=math.log(30.0))
    p.add_argument("--n-arms", type=int, default=2)
    p.add_argument("--t", type=int, default=100)
    p.set_defaults(func=_run_budget)

    return parser


def cli_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 < len(argv):
            try:
                tokens = _read_config_tokens(argv[idx + 1])
            except _VALIDATION_ERRORS as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            # config values go right after the subcommand so explicit
            # flags, parsed later, win
            argv = argv[:1] + tokens + argv[1:]
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if args.seed is None:
        print("error: seed required (pass --seed)", file=sys.stderr)
        return 2
    out = None
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    try:
        result_json = args.func(args, out)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    manifest = _manifest(args)
    if out is not None:
        (out / "result.json").write_text(result_json + "\n")
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
    print(
        json.dumps(
            {"result": json.loads(result_json), "manifest": manifest}, indent=2
        )
    )
    return 0


def main() -> None:
    raise SystemExit(cli_main())
