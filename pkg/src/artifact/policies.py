"""Parameterized bandit policies and offline data-collection policies.

The index policy family is UCB(alpha): after one initialization pull per arm,
round t pulls the arm maximizing  mu_hat_i + sqrt(alpha * ln(sum_j t_j) / t_i),
where the log argument is the number of completed pulls.  Variants: a
prior-mean warm start (one pseudo-pull per arm, no initialization phase), a
shared-ridge linear-payoff contextual policy LinUCB(alpha), and a finite-grid
GP policy GP-UCB(s) whose exploration width comes from the regularized kernel
posterior.  The offline collectors gather per-task reward tapes either
uniformly or by walking the hyperparameter axis one behavioral piece at a
time, reusing rewards across pieces.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .env import BanditInstance, ContextualInstance, GPInstance, RewardTape, _COIN_EPS
from .errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    TapeUnderflowError,
)

__all__ = [
    "UcbState",
    "PriorSpec",
    "LinUcbState",
    "GpState",
    "RbfKernel",
    "RunRecord",
    "ucb_index",
    "run_ucb",
    "run_ucb_with_prior",
    "run_linucb",
    "gp_posterior",
    "default_beta_schedule",
    "run_gpucb",
    "collect_offline_uniform",
    "collect_offline_piecewise",
]

# Relative tolerance for treating two index values as tied.  Used only where a
# right-limit winner must be identified (piece walking); run_ucb itself breaks
# exact float ties by lowest index.
_TIE_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Run records
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    """One policy run: choices, realized rewards, cumulative regret trace.

    ``cum_pseudo_regret`` accumulates max_j mu_j - mu_{A_t} when true means are
    known; otherwise it tracks realized-reward regret against the best fixed
    arm's tape prefix.
    """

    choices: np.ndarray
    rewards: np.ndarray
    cum_pseudo_regret: np.ndarray
    hyperparameter: object
    pseudo: bool = True

    def __post_init__(self):
        self.choices = np.asarray(self.choices, dtype=int)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.cum_pseudo_regret = np.asarray(self.cum_pseudo_regret, dtype=float)
        T = len(self.choices)
        if len(self.rewards) != T or len(self.cum_pseudo_regret) != T:
            raise ConfigurationError("RunRecord fields must share one length")

    @property
    def horizon(self) -> int:
        return len(self.choices)

    def final_regret(self) -> float:
        return float(self.cum_pseudo_regret[-1]) if self.horizon else 0.0

    def average_regret(self) -> float:
        return self.final_regret() / self.horizon if self.horizon else 0.0

    def to_csv(self, path) -> None:
        """Write rows ``round,choice,reward,cum_pseudo_regret`` (1-based rounds)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["round", "choice", "reward", "cum_pseudo_regret"])
            for t in range(self.horizon):
                writer.writerow(
                    [
                        t + 1,
                        int(self.choices[t]),
                        repr(float(self.rewards[t])),
                        repr(float(self.cum_pseudo_regret[t])),
                    ]
                )


# ---------------------------------------------------------------------------
# UCB(alpha)
# ---------------------------------------------------------------------------


def ucb_index(mean: float, pulls: int, round: int, alpha: float) -> float:
    """Optimistic index  mean + sqrt(alpha * ln(round) / pulls).

    ``round`` must be >= 2 so the natural-log width is positive; callers in
    the decision phase pass the number of completed pulls.
    """
    if pulls < 1:
        raise DomainError(f"pulls must be >= 1, got {pulls}")
    if round < 2:
        raise DomainError(f"round must be >= 2, got {round}")
    if alpha < 0.0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    return mean + math.sqrt(alpha * math.log(round) / pulls)


@dataclass
class UcbState:
    """Mutable UCB(alpha) learner state: per-arm pull counts and reward sums.

    ``round`` counts this learner's own completed pulls; between the
    initialization phase and any pseudo-pulls, sum(pulls) - pseudo = round.
    """

    n_arms: int
    prior: np.ndarray | None = None
    pulls: np.ndarray = field(init=False)
    reward_sums: np.ndarray = field(init=False)
    round: int = field(init=False, default=0)

    def __post_init__(self):
        if self.prior is None:
            self.pulls = np.zeros(self.n_arms, dtype=int)
            self.reward_sums = np.zeros(self.n_arms, dtype=float)
        else:
            prior = np.asarray(self.prior, dtype=float)
            if prior.shape != (self.n_arms,):
                raise ConfigurationError("prior length must equal the arm count")
            if np.any(prior < 0.0):
                raise ConfigurationError("prior means must be nonnegative")
            # one pseudo-pull per arm; no forced initialization phase
            self.pulls = np.ones(self.n_arms, dtype=int)
            self.reward_sums = prior.copy()

    def means(self) -> np.ndarray:
        return self.reward_sums / np.maximum(self.pulls, 1)

    def select_arm(self, alpha: float) -> int:
        """Next arm: round-robin through unpulled arms, then the argmax index
        with ties broken by lowest arm index."""
        if self.prior is None and self.round < self.n_arms:
            return self.round
        if self.n_arms == 1:
            return 0
        total = int(self.pulls.sum())
        log_total = math.log(total)
        best, best_idx = -math.inf, 0
        for i in range(self.n_arms):
            idx = self.reward_sums[i] / self.pulls[i] + math.sqrt(
                alpha * log_total / self.pulls[i]
            )
            if idx > best:
                best, best_idx = idx, i
        return best_idx

    def update(self, arm: int, reward: float) -> None:
        self.pulls[arm] += 1
        self.reward_sums[arm] += reward
        self.round += 1


@dataclass(frozen=True)
class PriorSpec:
    """Nonnegative prior arm means used as one pseudo-observation each."""

    prior_means: tuple

    def __post_init__(self):
        means = tuple(float(m) for m in self.prior_means)
        object.__setattr__(self, "prior_means", means)
        if any(m < 0.0 for m in means):
            raise ConfigurationError("prior means must be nonnegative")


def _realized_trace(tape: RewardTape, choices, rewards) -> np.ndarray:
    """Regret trace against the best fixed arm's realized tape prefix."""
    T = len(choices)
    prefix = np.cumsum(tape.rewards[:, :T], axis=1)
    best = prefix.max(axis=0)
    return best - np.cumsum(np.asarray(rewards, dtype=float))


def _finish_record(tape, instance_means, choices, rewards, hyperparameter):
    choices = np.asarray(choices, dtype=int)
    rewards = np.asarray(rewards, dtype=float)
    if instance_means is not None:
        mu = np.asarray(instance_means, dtype=float)
        per_round = mu.max() - mu[choices]
        trace = np.cumsum(per_round)
        pseudo = True
    else:
        trace = _realized_trace(tape, choices, rewards)
        pseudo = False
    return RunRecord(
        choices=choices,
        rewards=rewards,
        cum_pseudo_regret=trace,
        hyperparameter=hyperparameter,
        pseudo=pseudo,
    )


def _run_index_policy(
    tape: RewardTape,
    alpha: float,
    horizon: int,
    true_means,
    prior,
) -> RunRecord:
    n = tape.n_arms
    if alpha < 0.0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if prior is None and horizon < n:
        raise ConfigurationError(f"horizon {horizon} shorter than arm count {n}")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    state = UcbState(n_arms=n, prior=prior)
    cursors = np.zeros(n, dtype=int)
    choices = np.empty(horizon, dtype=int)
    rewards = np.empty(horizon, dtype=float)
    limit = tape.pulls_per_arm
    for t in range(horizon):
        arm = state.select_arm(alpha)
        j = cursors[arm]
        if j >= limit:
            raise TapeUnderflowError(arm=arm, have=limit, need=j + 1)
        r = float(tape.rewards[arm, j])
        cursors[arm] = j + 1
        state.update(arm, r)
        choices[t] = arm
        rewards[t] = r
    return _finish_record(tape, true_means, choices, rewards, alpha)


def run_ucb(
    tape: RewardTape,
    alpha: float,
    horizon: int,
    true_means=None,
) -> RunRecord:
    """Replay UCB(alpha) against a reward tape for ``horizon`` rounds.

    Rounds 1..n pull each arm once in index order; later rounds pull the
    argmax index (ties -> lowest index), consuming tape entries per arm in
    pull order.  ``true_means`` switches the trace to pseudo-regret.
    """
    return _run_index_policy(tape, alpha, horizon, true_means, prior=None)


def run_ucb_with_prior(
    tape: RewardTape,
    alpha: float,
    prior: PriorSpec,
    horizon: int,
    true_means=None,
) -> RunRecord:
    """UCB(alpha) warm-started from prior means.

    Each arm starts with one pseudo-pull of reward prior_means[i] (t_i = 1,
    S_i = prior_means[i]); the forced initialization phase is skipped, so the
    index is defined from round 1 and no tape entry is consumed by the prior.
    """
    spec = prior if isinstance(prior, PriorSpec) else PriorSpec(tuple(prior))
    prior_vec = np.asarray(spec.prior_means, dtype=float)
    if prior_vec.shape != (tape.n_arms,):
        raise ConfigurationError("prior length must equal the arm count")
    return _run_index_policy(tape, alpha, horizon, true_means, prior=prior_vec)


# ---------------------------------------------------------------------------
# LinUCB(alpha)
# ---------------------------------------------------------------------------


@dataclass
class LinUcbState:
    """Shared ridge model: K accumulates chosen-context outer products from an
    identity start; theta solves K theta = b."""

    d: int
    K: np.ndarray = field(init=False)
    b: np.ndarray = field(init=False)
    round: int = field(init=False, default=0)

    def __post_init__(self):
        self.K = np.eye(self.d)
        self.b = np.zeros(self.d)

    def theta(self) -> np.ndarray:
        return np.linalg.solve(self.K, self.b)

    def update(self, x: np.ndarray, payoff: float) -> None:
        self.K += np.outer(x, x)
        self.b += payoff * x
        self.round += 1


def run_linucb(
    instance: ContextualInstance,
    seed: int,
    alpha: float,
    horizon: int,
) -> RunRecord:
    """LinUCB(alpha) on a linear-payoff contextual instance.

    All randomness (contexts for every arm and round, plus per-(round, arm)
    payoff noise) is pre-drawn from ``seed``, so runs at two alpha values
    inside one behavioral piece make identical choices.
    """
    if alpha < 0.0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    rng = np.random.default_rng(seed)
    X = instance.draw_contexts(rng, horizon)
    noise = instance.noise_sigma * rng.standard_normal((horizon, instance.n_arms))
    theta_star = np.asarray(instance.theta_star)

    state = LinUcbState(d=instance.d)
    choices = np.empty(horizon, dtype=int)
    rewards = np.empty(horizon, dtype=float)
    per_round_gap = np.empty(horizon, dtype=float)
    for t in range(horizon):
        theta = state.theta()
        contexts = X[t]
        scores = contexts @ theta + alpha * np.sqrt(
            np.einsum("ij,ij->i", contexts, np.linalg.solve(state.K, contexts.T).T)
        )
        arm = int(np.argmax(scores))
        payoff = float(contexts[arm] @ theta_star + noise[t, arm])
        state.update(contexts[arm], payoff)
        true_payoffs = contexts @ theta_star
        choices[t] = arm
        rewards[t] = payoff
        per_round_gap[t] = float(true_payoffs.max() - true_payoffs[arm])
    return RunRecord(
        choices=choices,
        rewards=rewards,
        cum_pseudo_regret=np.cumsum(per_round_gap),
        hyperparameter=alpha,
        pseudo=True,
    )


# ---------------------------------------------------------------------------
# GP-UCB(s)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RbfKernel:
    """Unit-amplitude squared-exponential kernel; k(x, x') <= 1."""

    length_scale: float = 1.0

    def __call__(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-0.5 * d2 / self.length_scale**2)


@dataclass
class GpState:
    """Observations plus kernel/noise configuration for the GP posterior."""

    kernel: RbfKernel
    s: float
    points: list = field(default_factory=list)
    y: list = field(default_factory=list)
    jitter: float = 1e-10

    def __post_init__(self):
        if self.s <= 0.0:
            raise ConfigurationError(f"noise parameter s must be > 0, got {self.s}")

    def add(self, x: np.ndarray, value: float) -> None:
        self.points.append(np.atleast_1d(np.asarray(x, dtype=float)))
        self.y.append(float(value))


def _gp_posterior_batch(state: GpState, queries: np.ndarray):
    """Posterior mean and width at many query points at once."""
    queries = np.atleast_2d(queries)
    k_self = np.diag(state.kernel(queries, queries)).copy()
    if not state.points:
        return np.zeros(len(queries)), k_self
    Xo = np.vstack(state.points)
    yo = np.asarray(state.y)
    Kt = state.kernel(Xo, Xo) + (state.s + state.jitter) * np.eye(len(Xo))
    try:
        chol = sla.cho_factor(Kt, lower=True)
    except sla.LinAlgError as exc:
        raise NumericalError(f"posterior solve failed: {exc}") from exc
    Kq = state.kernel(Xo, queries)
    mu = Kq.T @ sla.cho_solve(chol, yo)
    width = k_self - np.einsum("ij,ij->j", Kq, sla.cho_solve(chol, Kq))
    return mu, np.maximum(width, 0.0)


def gp_posterior(state: GpState, query) -> tuple:
    """Posterior at one point: mean k_t(x)'(K_t + sI)^{-1} y_t and width
    k(x,x) - k_t(x)'(K_t + sI)^{-1} k_t(x); the prior (0, k(x,x)) at t=0."""
    mu, width = _gp_posterior_batch(state, np.atleast_2d(query))
    return float(mu[0]), float(width[0])


def default_beta_schedule(n_points: int, delta: float = 0.1):
    """Finite-grid confidence schedule beta_t = 2 ln(n t^2 pi^2 / (6 delta))."""

    def beta(t: int) -> float:
        return 2.0 * math.log(n_points * t * t * math.pi**2 / (6.0 * delta))

    return beta


def run_gpucb(
    instance: GPInstance,
    s: float,
    beta_schedule=None,
    horizon: int = 1,
    seed: int = 0,
    kernel: RbfKernel | None = None,
) -> RunRecord:
    """GP-UCB on a finite grid with noise hyperparameter ``s``.

    Round t selects the grid argmax of mu_{t-1}(x) + sqrt(beta_t) *
    sigma_{t-1}(x) (ties -> lowest grid index), observes f(x_t) plus seeded
    Gaussian noise, and refits the posterior.  The per-round noise draw is
    indexed by the round, not the point, so different s values on one seed
    share their observation noise.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    kernel = kernel or RbfKernel()
    if beta_schedule is None:
        beta_schedule = default_beta_schedule(instance.n_points)
    beta_fn = (
        beta_schedule
        if callable(beta_schedule)
        else (lambda t, _b=tuple(beta_schedule): _b[t - 1])
    )
    rng = np.random.default_rng(seed)
    noise = math.sqrt(instance.noise_var) * rng.standard_normal(horizon)
    state = GpState(kernel=kernel, s=s)
    f_best = instance.best_value()
    choices = np.empty(horizon, dtype=int)
    rewards = np.empty(horizon, dtype=float)
    gaps = np.empty(horizon, dtype=float)
    for t in range(1, horizon + 1):
        mu, width = _gp_posterior_batch(state, instance.grid)
        scores = mu + math.sqrt(beta_fn(t)) * width
        pick = int(np.argmax(scores))
        y = float(instance.f[pick] + noise[t - 1])
        state.add(instance.grid[pick], y)
        choices[t - 1] = pick
        rewards[t - 1] = y
        gaps[t - 1] = f_best - float(instance.f[pick])
    return RunRecord(
        choices=choices,
        rewards=rewards,
        cum_pseudo_regret=np.cumsum(gaps),
        hyperparameter=s,
        pseudo=True,
    )


# ---------------------------------------------------------------------------
# Offline collection policies
# ---------------------------------------------------------------------------


def collect_offline_uniform(instance: BanditInstance, horizon: int, seed: int) -> RewardTape:
    """Pull every arm ``horizon`` times: a tape of shape (n, T), T_o = n*T."""
    from .env import draw_tape

    return draw_tape(instance, pulls_per_arm=horizon, seed=seed)


class _LazyTape:
    """Per-arm reward streams drawn on demand; draws are indexed by pull
    count, so every restart replays the same prefix."""

    def __init__(self, instance: BanditInstance, seed: int):
        streams = np.random.SeedSequence(seed).spawn(instance.n_arms)
        self._rngs = [np.random.default_rng(s) for s in streams]
        self._arms = instance.arms
        self.rows = [[] for _ in instance.arms]

    def get(self, arm: int, j: int) -> float:
        row = self.rows[arm]
        while len(row) <= j:
            u = min(max(self._rngs[arm].random(), _COIN_EPS), 1.0 - _COIN_EPS)
            row.append(self._arms[arm].inverse_cdf(u))
        return row[j]


def _walk_piece(lazy: _LazyTape, n: int, alpha: float, horizon: int) -> float:
    """Run one T-round restart at the left edge of a behavioral piece.

    Ties at ``alpha`` resolve toward the arm whose width grows fastest (the
    right-limit winner), so the trajectory is the one shared by the whole
    piece [alpha, c).  Returns c, the smallest admissible index crossing
    strictly above ``alpha`` (inf when the piece extends to the range end).
    """
    pulls = np.ones(n, dtype=int)
    sums = np.array([lazy.get(i, 0) for i in range(n)], dtype=float)
    next_cross = math.inf
    for _ in range(horizon - n):
        total = int(pulls.sum())
        log_total = math.log(total)
        means = sums / pulls
        widths = np.sqrt(alpha * log_total / pulls)
        indices = means + widths
        top = indices.max()
        tol = _TIE_RTOL * max(1.0, abs(top))
        tied = np.flatnonzero(indices >= top - tol)
        star = int(min(tied, key=lambda i: (pulls[i], i)))
        for i in range(n):
            if i == star or pulls[i] >= pulls[star] or means[star] <= means[i]:
                continue
            gap = means[star] - means[i]
            denom = 1.0 / math.sqrt(pulls[i]) - 1.0 / math.sqrt(pulls[star])
            cross = (gap / denom) ** 2 / log_total
            if cross > alpha:
                next_cross = min(next_cross, cross)
        r = lazy.get(star, int(pulls[star]))
        sums[star] += r
        pulls[star] += 1
    return next_cross


def collect_offline_piecewise(
    instance: BanditInstance,
    alpha_range: tuple,
    horizon: int,
    seed: int,
):
    """Piece-sequential collection: one T-round UCB restart per behavioral
    piece of the growing tape, left to right across ``alpha_range``, drawing
    a fresh reward only when a restart outruns an arm's stored stream.

    Returns ``(tape, pieces_explored, T_o)`` where T_o counts the rewards the
    policy itself drew (seed-averaged E[T_o] <= min{n, Q_D} * T).  The
    returned tape is padded per arm to ``horizon`` columns with surplus draws
    that are not counted in T_o, so it satisfies run_ucb's length precondition
    for replays at any alpha in the range.
    """
    alpha_min, alpha_max = float(alpha_range[0]), float(alpha_range[1])
    if not 0.0 <= alpha_min < alpha_max:
        raise ConfigurationError(f"bad alpha_range {alpha_range}")
    if horizon < instance.n_arms:
        raise ConfigurationError("horizon must be >= the arm count")
    n = instance.n_arms
    lazy = _LazyTape(instance, seed)
    pieces = 0
    edge = alpha_min
    while True:
        cross = _walk_piece(lazy, n, edge, horizon)
        pieces += 1
        if cross >= alpha_max or math.isinf(cross):
            break
        edge = cross
    t_o = sum(len(row) for row in lazy.rows)
    width = max(horizon, max(len(row) for row in lazy.rows))
    rewards = np.array(
        [[lazy.get(i, j) for j in range(width)] for i in range(n)], dtype=float
    )
    return RewardTape(rewards=rewards, seed=seed), pieces, t_o
