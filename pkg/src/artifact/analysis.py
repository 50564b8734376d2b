"""Experiment-level computations: regret curves, transfer comparisons,
generalization-vs-N curves, and the Gaussian instance-dependent lower-bound
calculator.

Everything here aggregates module primitives over sampled tasks with
seed-derived substreams, so results are reproducible and independent of
worker count; outputs serialize to CSV with fixed headers.
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .dual import piecewise_dual_ucb
from .env import BanditInstance, Gaussian, draw_tape, sample_task
from .errors import ConfigurationError, DomainError, UnsupportedModelError
from .baselines import run_corral, run_corral_stochastic
from .policies import run_ucb
from .tuner import TunerResult, grid_erm, tuned_ucb

__all__ = [
    "RegretCurve",
    "LowerBoundReport",
    "TransferResult",
    "kl_inf_gaussian",
    "lower_bound_constant",
    "regret_curve",
    "transfer_experiment",
    "generalization_curve",
]


def _substream(seed: int, *path) -> int:
    """Derive a child seed from a root and an index path; worker-invariant."""
    ss = np.random.SeedSequence(entropy=[int(seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RegretCurve:
    """Mean loss with standard errors over a sorted parameter grid."""

    param: np.ndarray
    mean_loss: np.ndarray
    stderr: np.ndarray
    n_tasks: int
    horizon: int
    h_bound: float = math.inf

    def __post_init__(self):
        param = np.asarray(self.param, dtype=float)
        mean = np.asarray(self.mean_loss, dtype=float)
        se = np.asarray(self.stderr, dtype=float)
        if param.ndim != 1 or param.shape != mean.shape or mean.shape != se.shape:
            raise ConfigurationError("curve arrays must be 1-d and share a shape")
        if param.size and np.any(np.diff(param) <= 0):
            raise ConfigurationError("parameter grid must be strictly increasing")
        if np.any(se < 0.0):
            raise ConfigurationError("standard errors must be >= 0")
        if np.any(mean < 0.0) or np.any(mean > self.h_bound):
            raise ConfigurationError("mean losses must lie in [0, h_bound]")
        for name, arr in (("param", param), ("mean_loss", mean), ("stderr", se)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_csv(self, path) -> None:
        """Write rows ``param,mean_loss,stderr``."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["param", "mean_loss", "stderr"])
            for p, m, s in zip(self.param, self.mean_loss, self.stderr):
                writer.writerow([repr(float(p)), repr(float(m)), repr(float(s))])


@dataclass(frozen=True)
class LowerBoundReport:
    """Instance-dependent regret lower-bound constant for Gaussian arms.

    ``terms`` holds 2*gap/ln(1 + gap^2/V) per arm (zero for optimal arms);
    ``total`` their sum; ``kl_values`` the per-arm divergence infima under
    the variance cap.  ``cap_ok`` records whether the cap strictly dominates
    every arm's gap^2 + variance, the regime the bound is stated for.
    """

    gaps: tuple
    variances: tuple
    terms: tuple
    kl_values: tuple
    total: float
    cap: float
    cap_ok: bool
    n_best_arms: int

    def to_json(self, indent=None) -> str:
        payload = {
            "gaps": list(self.gaps),
            "variances": list(self.variances),
            "terms": list(self.terms),
            "kl_values": list(self.kl_values),
            "total": self.total,
            "cap": self.cap,
            "cap_ok": self.cap_ok,
            "n_best_arms": self.n_best_arms,
        }
        return json.dumps(payload, indent=indent)


@dataclass(frozen=True)
class TransferResult:
    """Per-step regret traces of the tuned policy against corral baselines."""

    methods: tuple
    mean_regret: np.ndarray
    sd_regret: np.ndarray
    tuner: TunerResult
    horizon: int
    n_test: int

    def to_csv(self, path) -> None:
        """Write rows ``step,method,mean_regret,sd`` (1-based steps)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "method", "mean_regret", "sd"])
            for j, name in enumerate(self.methods):
                for t in range(self.horizon):
                    writer.writerow(
                        [
                            t + 1,
                            name,
                            repr(float(self.mean_regret[j, t])),
                            repr(float(self.sd_regret[j, t])),
                        ]
                    )

    def final_means(self) -> dict:
        return {
            name: float(self.mean_regret[j, -1])
            for j, name in enumerate(self.methods)
        }


def kl_inf_gaussian(delta: float, variance: float, cap: float) -> float:
    """Smallest divergence from N(mu, variance) to any Gaussian with mean
    raised by ``delta`` under the standard-deviation cap.

    Above the cap threshold the infimum has the closed form
    0.5*ln(1 + delta^2/V); a binding cap moves the minimizer to sigma = cap.
    """
    if variance <= 0.0:
        raise DomainError(f"variance must be positive, got {variance}")
    if delta < 0.0:
        raise DomainError(f"delta must be >= 0, got {delta}")
    if cap <= 0.0:
        raise DomainError(f"cap must be positive, got {cap}")
    if cap > math.sqrt(delta * delta + variance):
        return 0.5 * math.log1p(delta * delta / variance)
    c2 = cap * cap
    return 0.5 * math.log(c2 / variance) + (variance + delta * delta) / (2.0 * c2) - 0.5


def lower_bound_constant(instance: BanditInstance, cap: float) -> LowerBoundReport:
    """Sum of per-arm constants 2*gap/ln(1 + gap^2/V) over suboptimal arms.

    Requires Gaussian arms with positive variance; optimal arms (including
    exact ties for best) contribute zero and are counted in
    ``n_best_arms``.
    """
    for i, arm in enumerate(instance.arms):
        if not isinstance(arm, Gaussian):
            raise UnsupportedModelError(
                f"arm {i} is {type(arm).__name__}; Gaussian arms required"
            )
        if arm.sigma <= 0.0:
            raise DomainError(f"arm {i} needs positive variance")
    mu = instance.means()
    gaps = mu.max() - mu
    variances = np.array([arm.sigma**2 for arm in instance.arms])
    terms = np.zeros(len(gaps))
    positive = gaps > 0.0
    terms[positive] = 2.0 * gaps[positive] / np.log1p(
        gaps[positive] ** 2 / variances[positive]
    )
    kl_values = tuple(
        kl_inf_gaussian(float(g), float(v), cap) for g, v in zip(gaps, variances)
    )
    cap_ok = cap * cap > float(np.max(gaps**2 + variances))
    return LowerBoundReport(
        gaps=tuple(float(g) for g in gaps),
        variances=tuple(float(v) for v in variances),
        terms=tuple(float(t) for t in terms),
        kl_values=kl_values,
        total=float(terms.sum()),
        cap=float(cap),
        cap_ok=cap_ok,
        n_best_arms=int(np.sum(gaps == 0.0)),
    )


def _task_pair(dist, seed: int, index: int, horizon: int):
    inst = sample_task(dist, _substream(seed, 0, index))
    tape = draw_tape(inst, horizon, _substream(seed, 1, index))
    return inst, tape


def regret_curve(
    dist,
    n_tasks: int,
    horizon: int,
    seed: int,
    rho_grid=None,
    alpha_range=None,
    h_bound: float = math.inf,
) -> RegretCurve:
    """Mean dual loss against the exploration parameter over sampled tasks.

    Exactly one of ``rho_grid`` (explicit points, replayed directly) and
    ``alpha_range`` (exact piecewise mode: the merged piece partition of all
    tasks supplies the evaluation points) must be given.  Deterministic in
    ``seed`` regardless of evaluation order.
    """
    if n_tasks < 2:
        raise ConfigurationError("need at least two tasks for standard errors")
    if (rho_grid is None) == (alpha_range is None):
        raise ConfigurationError("pass exactly one of rho_grid and alpha_range")
    pairs = [_task_pair(dist, seed, i, horizon) for i in range(n_tasks)]
    if rho_grid is not None:
        grid = np.unique(np.asarray(rho_grid, dtype=float))
        if grid.size == 0:
            raise ConfigurationError("need at least one grid point")
        losses = np.empty((n_tasks, grid.size))
        for i, (inst, tape) in enumerate(pairs):
            for j, rho in enumerate(grid):
                losses[i, j] = run_ucb(
                    tape, float(rho), horizon, true_means=inst.true_means
                ).average_regret()
    else:
        pieces = [
            piecewise_dual_ucb(
                tape, inst.true_means, alpha_range, horizon, h_bound=h_bound
            )
            for inst, tape in pairs
        ]
        cuts = np.unique(np.concatenate([pl.critical_points for pl in pieces]))
        bounds = np.concatenate(
            ([float(alpha_range[0])], cuts, [float(alpha_range[1])])
        )
        grid = 0.5 * (bounds[:-1] + bounds[1:])
        losses = np.empty((n_tasks, grid.size))
        for i, pl in enumerate(pieces):
            idx = np.searchsorted(pl.critical_points, grid, side="right")
            losses[i] = pl.piece_losses[idx]
    return RegretCurve(
        param=grid,
        mean_loss=losses.mean(axis=0),
        stderr=losses.std(axis=0, ddof=1) / math.sqrt(n_tasks),
        n_tasks=n_tasks,
        horizon=horizon,
        h_bound=h_bound,
    )


def transfer_experiment(
    train_dist,
    n_train: int,
    t_o: int,
    alpha_grid,
    test_horizon: int,
    n_test: int,
    seed: int,
    alpha_range=None,
    reward_bounds=(0.0, 1.0),
) -> TransferResult:
    """Tune offline, then race the tuned policy against corral baselines.

    Tuning runs on ``n_train`` sampled tasks at horizon ``t_o``: over
    ``alpha_grid`` by grid search, or over ``alpha_range`` exactly when
    given.  Each of ``n_test`` fresh tasks is then played for
    ``test_horizon`` rounds by UCB at the learned value and by both corral
    variants over ``alpha_grid``; a single-point grid corrals two copies of
    that point.  Traces report mean and standard deviation per step.
    """
    if n_test < 1:
        raise ConfigurationError("n_test must be >= 1")
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise ConfigurationError("alpha_grid must be nonempty")
    train = [_task_pair(train_dist, seed, i, t_o) for i in range(n_train)]
    if alpha_range is not None:
        tuner = tuned_ucb(train, alpha_range, t_o)
    else:

        def evaluator(pair):
            inst, tape = pair
            return lambda a: run_ucb(
                tape, a, t_o, true_means=inst.true_means
            ).average_regret()

        tuner = grid_erm(evaluator, train, grid)
    alpha_hat = float(tuner.param)
    corral_grid = grid if len(grid) >= 2 else grid * 2
    methods = ("tuned_ucb", "corral", "corral_stochastic")
    traces = np.empty((3, n_test, test_horizon))
    for i in range(n_test):
        inst = sample_task(train_dist, _substream(seed, 2, i))
        tape = draw_tape(inst, test_horizon, _substream(seed, 3, i))
        traces[0, i] = run_ucb(
            tape, alpha_hat, test_horizon, true_means=inst.true_means
        ).cum_pseudo_regret
        traces[1, i] = run_corral(
            inst,
            corral_grid,
            test_horizon,
            _substream(seed, 4, i),
            reward_bounds=reward_bounds,
        ).cum_pseudo_regret
        traces[2, i] = run_corral_stochastic(
            inst,
            corral_grid,
            test_horizon,
            _substream(seed, 5, i),
            reward_bounds=reward_bounds,
        ).cum_pseudo_regret
    ddof = 1 if n_test > 1 else 0
    return TransferResult(
        methods=methods,
        mean_regret=traces.mean(axis=1),
        sd_regret=traces.std(axis=1, ddof=ddof),
        tuner=tuner,
        horizon=test_horizon,
        n_test=n_test,
    )


def generalization_curve(
    dist,
    n_values,
    trials: int,
    t_o: int,
    n_test: int,
    test_horizon: int,
    seed: int,
    alpha_range=(0.0, 2.0),
) -> RegretCurve:
    """Mean test regret of the tuned parameter against training-set size.

    For each trial the test tasks are fixed and shared across all entries
    of ``n_values`` (common random numbers), so the trend in N is not
    confounded by test-set noise; training tasks are fresh per (trial, N).
    Points carry standard errors over trials.
    """
    n_values = [int(n) for n in n_values]
    if n_values != sorted(n_values) or len(set(n_values)) != len(n_values):
        raise ConfigurationError("n_values must be strictly ascending")
    if any(n < 1 for n in n_values):
        raise ConfigurationError("n_values must be >= 1")
    if trials < 2:
        raise ConfigurationError("need at least two trials for standard errors")
    if n_test < 1:
        raise ConfigurationError("n_test must be >= 1")
    scores = np.empty((trials, len(n_values)))
    for r in range(trials):
        test = [
            _task_pair(dist, _substream(seed, 6, r), i, test_horizon)
            for i in range(n_test)
        ]
        for k, n in enumerate(n_values):
            train = [
                _task_pair(dist, _substream(seed, 7, r, k), i, t_o)
                for i in range(n)
            ]
            alpha_hat = float(tuned_ucb(train, alpha_range, t_o).param)
            scores[r, k] = float(
                np.mean(
                    [
                        run_ucb(
                            tape, alpha_hat, test_horizon, true_means=inst.true_means
                        ).average_regret()
                        for inst, tape in test
                    ]
                )
            )
    return RegretCurve(
        param=np.asarray(n_values, dtype=float),
        mean_loss=scores.mean(axis=0),
        stderr=scores.std(axis=0, ddof=1) / math.sqrt(trials),
        n_tasks=trials,
        horizon=test_horizon,
    )
