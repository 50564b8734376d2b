"""Corralling meta-bandits over a finite grid of UCB(alpha) base learners.

Two meta-updates are provided: a log-barrier mirror-descent step with the
increasing-learning-rate rule, and a Tsallis-entropy (power 1/2) step with a
decaying step size.  Neither variant ever restarts.  Base learners advance
only on rounds they are sampled, and the meta-learner sees importance
weighted losses; losses are 1 - reward after an affine rescale of rewards
into [0, 1] via the configured bounds.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .env import BanditInstance
from .errors import ConfigurationError, NumericalError
from .policies import RunRecord, UcbState

__all__ = [
    "CorralState",
    "log_barrier_step",
    "tsallis_weights",
    "run_corral",
    "run_corral_stochastic",
]

logger = logging.getLogger(__name__)

_P_FLOOR = 1e-12
_BISECT_STEPS = 100


@dataclass
class CorralState:
    """Meta-learner state over M base UCB machines.

    ``p`` is the mirror-descent iterate; the sampling distribution each round
    is its smoothed version for the log-barrier variant and ``p`` itself for
    the Tsallis variant.  ``etas``/``rhos`` carry the increasing-learning-rate
    bookkeeping (log-barrier only); ``cum_losses`` the importance-weighted
    loss totals (Tsallis only).
    """

    bases: list
    p: np.ndarray
    etas: np.ndarray | None = None
    rhos: np.ndarray | None = None
    cum_losses: np.ndarray | None = None
    round: int = field(default=0)

    @property
    def n_bases(self) -> int:
        return len(self.bases)


def _clamp_distribution(p: np.ndarray, context: str) -> np.ndarray:
    if np.any(p < _P_FLOOR):
        logger.warning(
            "%s produced a near-degenerate meta distribution "
            "(min entry %.3e); clamping and renormalizing",
            context,
            float(p.min()),
        )
        p = np.maximum(p, _P_FLOOR)
    total = p.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericalError(f"{context}: meta distribution sum {total}")
    return p / total


def log_barrier_step(p: np.ndarray, etas: np.ndarray, losses: np.ndarray) -> np.ndarray:
    """One log-barrier OMD step: the new iterate satisfies
    1/p'_i = 1/p_i + eta_i (loss_i - lam) with lam chosen so p' sums to 1.

    The normalizer lam lies in [min loss, max loss]; within the bracket the
    candidate sum is increasing in lam wherever all inverse entries stay
    positive, so bisection converges; entries whose inverse would cross zero
    mark the candidate as overshooting (treated as sum +inf).
    """
    p = np.asarray(p, dtype=float)
    etas = np.asarray(etas, dtype=float)
    losses = np.asarray(losses, dtype=float)
    inv = 1.0 / p

    def candidate(lam):
        denom = inv + etas * (losses - lam)
        if np.any(denom <= 0.0):
            return None
        return 1.0 / denom

    lo = float(losses.min())
    hi = float(losses.max())
    if hi - lo <= 0.0:
        # uniform shift only: lam = loss keeps p unchanged
        return p.copy()
    for _ in range(_BISECT_STEPS):
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        cand = candidate(mid)
        if cand is None or cand.sum() > 1.0:
            hi = mid
        else:
            lo = mid
    cand = candidate(lo)
    if cand is None:
        raise NumericalError("log-barrier step failed to find a valid iterate")
    return cand / cand.sum()


def tsallis_weights(cum_losses: np.ndarray, eta: float) -> np.ndarray:
    """Distribution of the power-1/2 Tsallis-INF step:
    p_i = (eta (L_i - z))^{-2} with z < min L chosen so p sums to 1.

    The sum is increasing in z, diverges as z approaches min L and vanishes
    as z falls, so bisection over an expanded lower bracket converges.
    """
    L = np.asarray(cum_losses, dtype=float)
    if eta <= 0.0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    top = float(L.min())

    def total(z):
        with np.errstate(over="ignore", divide="ignore"):
            return float(np.sum(1.0 / (eta * (L - z)) ** 2))

    width = 1.0
    lo = top - width
    while total(lo) > 1.0:
        width *= 2.0
        lo = top - width
        if width > 1e18:
            raise NumericalError("tsallis bracket expansion failed")
    # one ulp below the smallest loss: the sum there is astronomically
    # large, so the root is bracketed
    hi = float(np.nextafter(top, -math.inf))
    for _ in range(_BISECT_STEPS):
        if hi - lo <= 1e-15 * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        if total(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    z = lo
    p = 1.0 / (eta * (L - z)) ** 2
    return p / p.sum()


def _prepare(instance, alpha_grid, horizon, reward_bounds):
    alphas = [float(a) for a in alpha_grid]
    if len(alphas) < 2:
        raise ConfigurationError("need at least two base hyperparameters")
    if any(a < 0.0 for a in alphas):
        raise ConfigurationError("base hyperparameters must be >= 0")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    lo, hi = float(reward_bounds[0]), float(reward_bounds[1])
    if not lo < hi:
        raise ConfigurationError(f"reward bounds must satisfy lo < hi, got ({lo}, {hi})")
    bases = [UcbState(n_arms=instance.n_arms) for _ in alphas]
    return alphas, bases, lo, hi


def _meta_record(trace, horizon, n_bases):
    if trace is None:
        return None
    trace["base_choices"] = np.empty(horizon, dtype=int)
    trace["fed_losses"] = np.zeros((horizon, n_bases))
    trace["p_history"] = np.empty((horizon + 1, n_bases))
    return trace


def _sample(p: np.ndarray, u: float) -> int:
    # inverse-CDF draw; the final clamp covers cumulative-sum roundoff
    j = int(np.searchsorted(np.cumsum(p), u, side="right"))
    return min(j, p.size - 1)


def run_corral(
    instance: BanditInstance,
    alpha_grid,
    horizon: int,
    seed: int,
    reward_bounds=(0.0, 1.0),
    eta: float | None = None,
    meta_trace: dict | None = None,
) -> RunRecord:
    """Log-barrier Corral over UCB(alpha) bases, never restarted.

    Each round samples a base from the exploration-smoothed distribution,
    lets it pull an arm and update on the raw reward, feeds the meta-learner
    the importance-weighted loss, takes a log-barrier step, and grows a
    base's learning rate by beta whenever its smoothed probability falls
    below its running threshold.  The default initial step size scales like
    sqrt(M / horizon); smoothing and rate growth use gamma = 1/horizon and
    beta = e^(1/ln horizon).  Each round consumes exactly two uniforms from
    the seeded stream: the base draw, then the reward draw.
    """
    alphas, bases, r_lo, r_hi = _prepare(instance, alpha_grid, horizon, reward_bounds)
    M = len(alphas)
    if eta is None:
        eta = math.sqrt(M / horizon)
    if eta <= 0.0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    gamma = 1.0 / horizon
    beta = math.exp(1.0 / math.log(horizon)) if horizon > 1 else 1.0
    state = CorralState(
        bases=bases,
        p=np.full(M, 1.0 / M),
        etas=np.full(M, float(eta)),
        rhos=np.full(M, 2.0 * M),
    )
    trace = _meta_record(meta_trace, horizon, M)
    rng = np.random.default_rng(seed)
    mu = instance.means()
    choices = np.empty(horizon, dtype=int)
    rewards = np.empty(horizon, dtype=float)
    for t in range(horizon):
        p_bar = (1.0 - gamma) * state.p + gamma / M
        p_bar = _clamp_distribution(p_bar, "corral smoothing")
        if trace is not None:
            trace["p_history"][t] = p_bar
        j = _sample(p_bar, float(rng.random()))
        arm = state.bases[j].select_arm(alphas[j])
        r = float(instance.arms[arm].inverse_cdf(float(rng.random())))
        state.bases[j].update(arm, r)
        loss = 1.0 - min(1.0, max(0.0, (r - r_lo) / (r_hi - r_lo)))
        fed = np.zeros(M)
        fed[j] = loss / p_bar[j]
        if trace is not None:
            trace["base_choices"][t] = j
            trace["fed_losses"][t] = fed
        state.p = _clamp_distribution(
            log_barrier_step(state.p, state.etas, fed), "log-barrier step"
        )
        p_next = (1.0 - gamma) * state.p + gamma / M
        grow = 1.0 / p_next > state.rhos
        state.rhos[grow] = 2.0 / p_next[grow]
        state.etas[grow] *= beta
        state.round += 1
        choices[t] = arm
        rewards[t] = r
    if trace is not None:
        trace["p_history"][horizon] = (1.0 - gamma) * state.p + gamma / M
    return _pseudo_record(mu, choices, rewards, alphas)


def run_corral_stochastic(
    instance: BanditInstance,
    alpha_grid,
    horizon: int,
    seed: int,
    reward_bounds=(0.0, 1.0),
    meta_trace: dict | None = None,
) -> RunRecord:
    """Tsallis-entropy (power 1/2) corralling over UCB(alpha) bases.

    Samples a base from the Tsallis weights of the cumulative importance
    weighted losses with step size 1/sqrt(t), advances only that base on the
    raw reward, and never restarts.  Each round consumes exactly two
    uniforms from the seeded stream: the base draw, then the reward draw.
    """
    alphas, bases, r_lo, r_hi = _prepare(instance, alpha_grid, horizon, reward_bounds)
    M = len(alphas)
    state = CorralState(
        bases=bases,
        p=np.full(M, 1.0 / M),
        cum_losses=np.zeros(M),
    )
    trace = _meta_record(meta_trace, horizon, M)
    rng = np.random.default_rng(seed)
    mu = instance.means()
    choices = np.empty(horizon, dtype=int)
    rewards = np.empty(horizon, dtype=float)
    for t in range(horizon):
        eta_t = 1.0 / math.sqrt(t + 1.0)
        p = tsallis_weights(state.cum_losses, eta_t)
        state.p = _clamp_distribution(p, "tsallis step")
        if trace is not None:
            trace["p_history"][t] = state.p
        j = _sample(state.p, float(rng.random()))
        arm = state.bases[j].select_arm(alphas[j])
        r = float(instance.arms[arm].inverse_cdf(float(rng.random())))
        state.bases[j].update(arm, r)
        loss = 1.0 - min(1.0, max(0.0, (r - r_lo) / (r_hi - r_lo)))
        fed = np.zeros(M)
        fed[j] = loss / state.p[j]
        state.cum_losses += fed
        if trace is not None:
            trace["base_choices"][t] = j
            trace["fed_losses"][t] = fed
        state.round += 1
        choices[t] = arm
        rewards[t] = r
    if trace is not None:
        trace["p_history"][horizon] = tsallis_weights(
            state.cum_losses, 1.0 / math.sqrt(horizon + 1.0)
        )
    return _pseudo_record(mu, choices, rewards, alphas)


def _pseudo_record(mu, choices, rewards, alphas) -> RunRecord:
    trace = np.cumsum(mu.max() - mu[choices])
    return RunRecord(
        choices=choices,
        rewards=rewards,
        cum_pseudo_regret=trace,
        hyperparameter={"alpha_grid": alphas},
        pseudo=True,
    )
