"""Exact behavioral pieces of index policies as a function of exploration.

For a fixed reward tape, the arm sequence of UCB(alpha) changes only at
finitely many alpha values.  This module finds those values exactly by
interval recursion (iterative, explicit work stack), evaluates the loss on
each piece by midpoint replay, and estimates the expected piece count of a
task family.  The LinUCB analogue subdivides rounds by upper envelopes of
per-arm affine index functions.

The recursion advances the incumbent argmax arm on the left part of the
interval and re-enters un-advanced at the first overtaking alpha.  All index
widths use sqrt(alpha * ln(completed pulls) / pulls_i), the same convention
as artifact.policies.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .env import ContextualInstance, RewardTape, TaskDistribution, draw_tape, sample_task
from .errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    ResourceLimitError,
)
from .policies import run_ucb, run_ucb_with_prior

__all__ = [
    "PiecewiseLoss",
    "QdEstimate",
    "alpha_critical_points",
    "piecewise_dual_ucb",
    "linucb_critical_points",
    "estimate_qd",
]

_POINT_BUFFER_LIMIT = 2_000_008


def _scan_source(
    tape,
    lengths,
    pulls0,
    sums0,
    cursors0,
    alpha_lo,
    alpha_hi,
    budget,
    out_points,
    st_alpha,
    st_adv,
    st_flag,
    st_pulls,
    st_sums,
    st_curs,
):
    """Depth-first interval scan; shared source for the JIT and plain paths.

    Frames flagged 1 emit their left endpoint when popped, which yields the
    critical points in ascending order (in-order traversal).  Returns
    (n_points, n_leaves, status): status 1 = point buffer full, 2 = stack
    full, 0 = ok.
    """
    n = pulls0.shape[0]
    maxd = st_adv.shape[0]
    cap = out_points.shape[0]
    st_alpha[0, 0] = alpha_lo
    st_alpha[0, 1] = alpha_hi
    st_adv[0] = 0
    st_flag[0] = 0
    for i in range(n):
        st_pulls[0, i] = pulls0[i]
        st_sums[0, i] = sums0[i]
        st_curs[0, i] = cursors0[i]
    top = 1
    n_points = 0
    n_leaves = 0
    pulls = np.empty(n, np.int64)
    sums = np.empty(n, np.float64)
    curs = np.empty(n, np.int64)
    idx = np.empty(n, np.float64)
    while top > 0:
        top -= 1
        a_l = st_alpha[top, 0]
        a_h = st_alpha[top, 1]
        adv = st_adv[top]
        if st_flag[top] == 1:
            if n_points >= cap:
                return n_points, n_leaves, 1
            out_points[n_points] = a_l
            n_points += 1
        for i in range(n):
            pulls[i] = st_pulls[top, i]
            sums[i] = st_sums[top, i]
            curs[i] = st_curs[top, i]
        while True:
            done = budget >= 0 and adv >= budget
            if not done:
                for i in range(n):
                    if curs[i] >= lengths[i]:
                        done = True
            if done:
                n_leaves += 1
                break
            total = 0
            for i in range(n):
                total += pulls[i]
            log_total = math.log(total)
            best = -np.inf
            for i in range(n):
                v = sums[i] / pulls[i] + math.sqrt(a_l * log_total / pulls[i])
                idx[i] = v
                if v > best:
                    best = v
            scale = abs(best)
            if scale < 1.0:
                scale = 1.0
            tol = 1e-12 * scale
            # right-limit argmax: ties resolved toward the fastest-growing
            # (least-pulled) arm, then the lowest index
            star = -1
            star_pulls = 9223372036854775807
            for i in range(n):
                if idx[i] >= best - tol and pulls[i] < star_pulls:
                    star = i
                    star_pulls = pulls[i]
            mu_star = sums[star] / pulls[star]
            inv_root_star = 1.0 / math.sqrt(pulls[star])
            a_next = np.inf
            for i in range(n):
                if i != star and pulls[i] < pulls[star]:
                    gap = mu_star - sums[i] / pulls[i]
                    if gap > 0.0:
                        denom = 1.0 / math.sqrt(pulls[i]) - inv_root_star
                        c = (gap / denom) ** 2 / log_total
                        if c > a_l and c < a_next:
                            a_next = c
            if a_next < a_h:
                if top >= maxd:
                    return n_points, n_leaves, 2
                st_alpha[top, 0] = a_next
                st_alpha[top, 1] = a_h
                st_adv[top] = adv
                st_flag[top] = 1
                for i in range(n):
                    st_pulls[top, i] = pulls[i]
                    st_sums[top, i] = sums[i]
                    st_curs[top, i] = curs[i]
                top += 1
                a_h = a_next
            reward = tape[star, curs[star]]
            curs[star] += 1
            sums[star] += reward
            pulls[star] += 1
            adv += 1
    return n_points, n_leaves, 0


def _compile_scan():
    if os.environ.get("BT_DISABLE_JIT") == "1":
        return _scan_source
    try:
        import numba
    except Exception:
        return _scan_source
    try:
        return numba.njit(cache=True)(_scan_source)
    except Exception:
        return _scan_source


_scan_impl = _compile_scan()


def _run_scan(tape, lengths, pulls0, sums0, cursors0, alpha_lo, alpha_hi, budget):
    """Allocate buffers, run the kernel, and return the sorted points.

    Starts with a buffer sized for typical piece counts and retries once at
    the hard limit; a scan that outgrows even that raises a resource error.
    """
    n = tape.shape[0]
    total_future = int(lengths.sum() - cursors0.sum())
    budget_eff = total_future if budget < 0 else min(int(budget), total_future)
    tape_arr = np.ascontiguousarray(tape, dtype=np.float64)
    tier1 = max(256, 8 * n * (budget_eff + 2))
    tiers = [tier1]
    if tier1 < _POINT_BUFFER_LIMIT:
        tiers.append(_POINT_BUFFER_LIMIT)
    for cap in tiers:
        maxd = cap + n * (budget_eff + 2) + 64
        out = np.empty(cap, dtype=np.float64)
        st_alpha = np.empty((maxd, 2), dtype=np.float64)
        st_adv = np.empty(maxd, dtype=np.int64)
        st_flag = np.empty(maxd, dtype=np.uint8)
        st_pulls = np.empty((maxd, n), dtype=np.int64)
        st_sums = np.empty((maxd, n), dtype=np.float64)
        st_curs = np.empty((maxd, n), dtype=np.int64)
        n_points, n_leaves, status = _scan_impl(
            tape_arr,
            lengths,
            pulls0,
            sums0,
            cursors0,
            float(alpha_lo),
            float(alpha_hi),
            int(budget),
            out,
            st_alpha,
            st_adv,
            st_flag,
            st_pulls,
            st_sums,
            st_curs,
        )
        if status == 0:
            points = out[:n_points].copy()
            if n_points + 1 != n_leaves or not np.all(np.diff(points) > 0):
                raise NumericalError(
                    "interval scan produced an inconsistent piece set"
                )
            return points
    raise ResourceLimitError(
        f"critical-point count exceeded the buffer limit ({_POINT_BUFFER_LIMIT}); "
        "narrow the alpha range or shorten the horizon"
    )


def alpha_critical_points(
    alpha_l: float,
    alpha_h: float,
    pulls,
    means,
    future,
    max_advances: int | None = None,
) -> list:
    """Exploration values where the index policy's next decisions change.

    ``pulls``/``means`` describe the per-arm state entering the scan and
    ``future`` holds the not-yet-consumed reward sequence of each arm
    (sequences may have unequal lengths).  A branch of the recursion stops
    once any arm's future is exhausted, or after ``max_advances`` pulls when
    given.  Returns a sorted list, strictly inside (alpha_l, alpha_h).
    """
    alpha_l = float(alpha_l)
    alpha_h = float(alpha_h)
    if alpha_l < 0.0:
        raise DomainError(f"alpha_l must be >= 0, got {alpha_l}")
    if not alpha_l < alpha_h:
        raise ConfigurationError(
            f"alpha interval must satisfy alpha_l < alpha_h, got [{alpha_l}, {alpha_h}]"
        )
    pulls_arr = np.asarray(pulls, dtype=np.int64)
    means_arr = np.asarray(means, dtype=np.float64)
    n = pulls_arr.shape[0]
    if means_arr.shape[0] != n or len(future) != n:
        raise ConfigurationError("pulls, means, and future must have equal lengths")
    if n == 0:
        raise ConfigurationError("need at least one arm")
    if np.any(pulls_arr < 1):
        raise DomainError("every arm needs at least one completed pull")
    if not np.all(np.isfinite(means_arr)):
        raise DomainError("means must be finite")
    if max_advances is not None and max_advances < 0:
        raise ConfigurationError("max_advances must be >= 0 when given")
    if n == 1:
        return []
    lengths = np.array([len(seq) for seq in future], dtype=np.int64)
    width = max(1, int(lengths.max()))
    tape = np.zeros((n, width), dtype=np.float64)
    for i, seq in enumerate(future):
        if lengths[i]:
            tape[i, : lengths[i]] = np.asarray(seq, dtype=np.float64)
    points = _run_scan(
        tape,
        lengths,
        pulls_arr,
        means_arr * pulls_arr,
        np.zeros(n, dtype=np.int64),
        alpha_l,
        alpha_h,
        -1 if max_advances is None else int(max_advances),
    )
    return [float(p) for p in points]


@dataclass(frozen=True)
class PiecewiseLoss:
    """Piecewise-constant loss over an exploration range.

    Piece k covers [boundary_k, boundary_{k+1}) with the final piece closed
    on the right; ``critical_points`` are the interior boundaries.
    """

    critical_points: np.ndarray
    piece_losses: np.ndarray
    rho_min: float
    rho_max: float
    h_bound: float = math.inf

    def __post_init__(self):
        points = np.asarray(self.critical_points, dtype=np.float64).copy()
        losses = np.asarray(self.piece_losses, dtype=np.float64).copy()
        if not self.rho_min < self.rho_max:
            raise ConfigurationError("rho_min must be < rho_max")
        if points.size and not np.all(np.diff(points) > 0):
            raise ConfigurationError("critical points must be strictly increasing")
        if points.size and not (
            points[0] > self.rho_min and points[-1] < self.rho_max
        ):
            raise ConfigurationError("critical points must lie inside the range")
        if losses.shape[0] != points.shape[0] + 1:
            raise ConfigurationError(
                f"need {points.shape[0] + 1} piece losses, got {losses.shape[0]}"
            )
        if not np.all(np.isfinite(losses)):
            raise ConfigurationError("piece losses must be finite")
        if np.any(losses < 0.0) or np.any(losses > self.h_bound):
            raise ConfigurationError("piece losses must lie in [0, h_bound]")
        points.setflags(write=False)
        losses.setflags(write=False)
        object.__setattr__(self, "critical_points", points)
        object.__setattr__(self, "piece_losses", losses)

    @property
    def q(self) -> int:
        """Number of constant pieces."""
        return int(self.piece_losses.shape[0])

    def boundaries(self) -> np.ndarray:
        return np.concatenate(
            ([self.rho_min], self.critical_points, [self.rho_max])
        )

    def midpoints(self) -> np.ndarray:
        bounds = self.boundaries()
        return 0.5 * (bounds[:-1] + bounds[1:])

    def loss_at(self, rho: float) -> float:
        if not self.rho_min <= rho <= self.rho_max:
            raise DomainError(
                f"rho {rho} outside [{self.rho_min}, {self.rho_max}]"
            )
        k = int(np.searchsorted(self.critical_points, rho, side="right"))
        return float(self.piece_losses[k])

    def to_csv(self, path) -> None:
        """Write rows ``piece_index,alpha_lo,alpha_hi,loss`` (0-based index)."""
        bounds = self.boundaries()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["piece_index", "alpha_lo", "alpha_hi", "loss"])
            for k in range(self.q):
                writer.writerow(
                    [
                        k,
                        repr(float(bounds[k])),
                        repr(float(bounds[k + 1])),
                        repr(float(self.piece_losses[k])),
                    ]
                )


def _piece_loss_from_replay(tape, alpha, horizon, true_means, prior=None):
    if prior is None:
        record = run_ucb(tape, float(alpha), horizon, true_means=true_means)
    else:
        record = run_ucb_with_prior(
            tape, float(alpha), prior, horizon, true_means=true_means
        )
    if true_means is not None:
        return record.average_regret()
    # realized-reward regret against the best fixed arm's tape prefix
    return max(0.0, record.average_regret())


def piecewise_dual_ucb(
    tape: RewardTape,
    true_means,
    alpha_range,
    horizon: int,
    h_bound: float = math.inf,
    prior=None,
) -> PiecewiseLoss:
    """Exact loss pieces of the index policy on one tape over an alpha range.

    Seeds the scan with the post-initialization state (one pull per arm, the
    first tape entry as its mean) and replays the policy at each piece's
    midpoint for the loss: average per-round shortfall against the best mean
    when ``true_means`` is given, otherwise realized-reward regret against
    the best fixed arm's tape prefix, floored at zero.

    With ``prior`` set, each arm instead starts from one pseudo-pull at the
    prior mean, no tape entry is consumed up front, and all ``horizon``
    rounds are adaptive, matching run_ucb_with_prior.
    """
    alpha_min = float(alpha_range[0])
    alpha_max = float(alpha_range[1])
    if not 0.0 <= alpha_min < alpha_max:
        raise ConfigurationError(f"bad alpha range {alpha_range!r}")
    n, width = tape.rewards.shape
    if horizon < n and prior is None:
        raise ConfigurationError("horizon must be >= the arm count")
    if width < horizon:
        raise ConfigurationError(
            f"tape must hold at least horizon entries per arm ({width} < {horizon})"
        )
    if prior is not None:
        prior = np.asarray(
            prior.prior_means if hasattr(prior, "prior_means") else prior,
            dtype=np.float64,
        )
        if prior.shape != (n,):
            raise ConfigurationError("prior length must equal the arm count")
    if n == 1:
        points = np.empty(0)
    elif prior is not None:
        points = _run_scan(
            tape.rewards,
            np.full(n, horizon, dtype=np.int64),
            np.ones(n, dtype=np.int64),
            prior.copy(),
            np.zeros(n, dtype=np.int64),
            alpha_min,
            alpha_max,
            horizon,
        )
    else:
        points = _run_scan(
            tape.rewards,
            np.full(n, horizon, dtype=np.int64),
            np.ones(n, dtype=np.int64),
            tape.rewards[:, 0].astype(np.float64),
            np.ones(n, dtype=np.int64),
            alpha_min,
            alpha_max,
            horizon - n,
        )
    bounds = np.concatenate(([alpha_min], points, [alpha_max]))
    mids = 0.5 * (bounds[:-1] + bounds[1:])
    losses = np.array(
        [
            _piece_loss_from_replay(tape, mid, horizon, true_means, prior=prior)
            for mid in mids
        ]
    )
    return PiecewiseLoss(
        critical_points=points,
        piece_losses=losses,
        rho_min=alpha_min,
        rho_max=alpha_max,
        h_bound=h_bound,
    )


def _upper_envelope(intercepts, slopes, lo, hi):
    """Segments [(seg_lo, seg_hi, arm)] of the max of affine functions.

    The leader at an endpoint is the value argmax, ties toward the larger
    slope then the lower index; each overtake needs a strictly larger slope,
    so there are at most n segments.
    """
    values = intercepts + lo * slopes
    best = values.max()
    tol = 1e-12 * max(1.0, abs(best))
    tied = np.flatnonzero(values >= best - tol)
    leader = int(tied[int(np.argmax(slopes[tied]))])
    segments = []
    cur = lo
    while True:
        nxt = hi
        cand = -1
        for j in range(intercepts.shape[0]):
            if j == leader or slopes[j] <= slopes[leader]:
                continue
            c = (intercepts[leader] - intercepts[j]) / (slopes[j] - slopes[leader])
            if cur < c < nxt or (c == nxt and cand >= 0 and slopes[j] > slopes[cand]):
                nxt = c
                cand = j
        if cand < 0:
            segments.append((cur, hi, leader))
            return segments
        segments.append((cur, nxt, leader))
        cur = nxt
        leader = cand


def linucb_critical_points(
    instance: ContextualInstance,
    alpha_range,
    horizon: int,
    seed: int,
    cap: int = 1_000_000,
) -> PiecewiseLoss:
    """Exact behavioral pieces of LinUCB(alpha) under a fixed seed.

    Contexts and payoff noise are pre-drawn exactly as in run_linucb, so the
    piece structure describes those replays.  Each round splits an interval
    at the upper-envelope breakpoints of the per-arm affine index functions
    score_i(alpha) = theta_hat . x_i + alpha * sqrt(x_i' K^-1 x_i); the
    number of intervals is capped (resource error beyond ``cap``).
    """
    lo = float(alpha_range[0])
    hi = float(alpha_range[1])
    if not 0.0 <= lo < hi:
        raise ConfigurationError(f"bad alpha range {alpha_range!r}")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if cap < 1:
        raise ConfigurationError("cap must be >= 1")
    rng = np.random.default_rng(seed)
    contexts = instance.draw_contexts(rng, horizon)
    noise = instance.noise_sigma * rng.standard_normal(
        (horizon, instance.n_arms)
    )
    theta_star = np.asarray(instance.theta_star, dtype=np.float64)
    true_payoffs = contexts @ theta_star
    round_gaps = true_payoffs.max(axis=1, keepdims=True) - true_payoffs

    frames = [
        (lo, hi, 0, np.eye(instance.d), np.zeros(instance.d), 0.0)
    ]
    created = 1
    pieces = []
    while frames:
        seg_lo, seg_hi, t, design, response, cum_gap = frames.pop()
        if t == horizon:
            pieces.append((seg_lo, seg_hi, cum_gap / horizon))
            continue
        theta_hat = np.linalg.solve(design, response)
        ctx = contexts[t]
        intercepts = ctx @ theta_hat
        solved = np.linalg.solve(design, ctx.T).T
        slopes = np.sqrt(np.einsum("ij,ij->i", ctx, solved))
        segments = _upper_envelope(intercepts, slopes, seg_lo, seg_hi)
        for sub_lo, sub_hi, arm in reversed(segments):
            payoff = float(ctx[arm] @ theta_star + noise[t, arm])
            frames.append(
                (
                    sub_lo,
                    sub_hi,
                    t + 1,
                    design + np.outer(ctx[arm], ctx[arm]),
                    response + payoff * ctx[arm],
                    cum_gap + float(round_gaps[t, arm]),
                )
            )
            created += 1
            if created > cap:
                raise ResourceLimitError(
                    f"interval count exceeded the cap ({cap})"
                )
    points = np.array([p[0] for p in pieces[1:]])
    losses = np.array([p[2] for p in pieces])
    return PiecewiseLoss(
        critical_points=points,
        piece_losses=losses,
        rho_min=lo,
        rho_max=hi,
    )


@dataclass(frozen=True)
class QdEstimate:
    """Sample mean and normal-approximation CI of the piece count."""

    mean: float
    ci95: float
    n_samples: int
    family: str
    horizon: int
    rho_range: tuple

    def __post_init__(self):
        if self.mean < 1.0:
            raise ConfigurationError("mean piece count cannot be below 1")
        if self.ci95 < 0.0:
            raise ConfigurationError("ci95 must be >= 0")

    def to_json(self) -> str:
        return json.dumps(
            {
                "mean": self.mean,
                "ci95": self.ci95,
                "n_samples": self.n_samples,
                "family": self.family,
                "T": self.horizon,
                "range": [self.rho_range[0], self.rho_range[1]],
            }
        )


def _count_pieces(rewards: np.ndarray, lo: float, hi: float, horizon: int) -> int:
    n = rewards.shape[0]
    if n == 1:
        return 1
    points = _run_scan(
        rewards,
        np.full(n, horizon, dtype=np.int64),
        np.ones(n, dtype=np.int64),
        rewards[:, 0].astype(np.float64),
        np.ones(n, dtype=np.int64),
        lo,
        hi,
        horizon - n,
    )
    return int(points.size) + 1


def _qd_one_sample(args):
    dist, horizon, lo, hi, seed, index = args
    entropy = np.random.SeedSequence(entropy=[seed, index]).generate_state(
        2, np.uint64
    )
    task = sample_task(dist, int(entropy[0]))
    tape = draw_tape(task, horizon, int(entropy[1]))
    return _count_pieces(tape.rewards, lo, hi, horizon)


def estimate_qd(
    dist: TaskDistribution,
    horizon: int,
    rho_range,
    num_samples: int,
    seed: int,
    workers: int = 1,
) -> QdEstimate:
    """Mean piece count of the family's dual loss over (task, tape) draws.

    Each sample draws an independent task and tape from a per-sample seed
    stream, so the estimate does not depend on ``workers`` (the family must
    be picklable for workers > 1).
    """
    lo = float(rho_range[0])
    hi = float(rho_range[1])
    if not 0.0 <= lo < hi:
        raise ConfigurationError(f"bad rho range {rho_range!r}")
    if num_samples < 2:
        raise ConfigurationError("num_samples must be >= 2")
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    jobs = [
        (dist, horizon, lo, hi, int(seed), i) for i in range(num_samples)
    ]
    if workers == 1:
        counts = [_qd_one_sample(job) for job in jobs]
    else:
        chunk = max(1, num_samples // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(_qd_one_sample, jobs, chunksize=chunk))
    counts = np.asarray(counts, dtype=np.float64)
    mean = float(counts.mean())
    sd = float(counts.std(ddof=1))
    return QdEstimate(
        mean=mean,
        ci95=1.96 * sd / math.sqrt(num_samples),
        n_samples=num_samples,
        family=type(dist).__name__,
        horizon=horizon,
        rho_range=(lo, hi),
    )
