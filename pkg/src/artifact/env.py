"""Problem instances, task meta-distributions, and derandomized reward tapes.

A bandit problem is a list of arm reward distributions.  All randomness used
by a run can be pre-drawn into a :class:`RewardTape`: per-arm reward sequences
obtained by pushing i.i.d. uniform coins through each arm's generalized
inverse CDF.  The j-th entry of arm i's sequence is the reward revealed on the
j-th pull of arm i, so replaying any pull pattern against a tape is
deterministic.  Real offline reward logs enter through :func:`load_tapes`.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DomainError, TapeFormatError

__all__ = [
    "ArmDistribution",
    "Bernoulli",
    "Uniform",
    "Gaussian",
    "Categorical",
    "BanditInstance",
    "TaskDistribution",
    "BernoulliFamily",
    "UniformFamily",
    "GaussianFamily",
    "CustomFamily",
    "RewardTape",
    "ContextualInstance",
    "GPInstance",
    "sample_task",
    "inverse_cdf",
    "draw_tape",
    "load_tapes",
    "save_tapes",
]

# Uniform coins are clipped away from {0, 1} before the inverse-CDF transform
# so unbounded kinds (Gaussian) never produce infinite tape entries.
_COIN_EPS = 1e-16


# ---------------------------------------------------------------------------
# Arm reward distributions
# ---------------------------------------------------------------------------


class ArmDistribution:
    """Base class for one arm's reward distribution."""

    def mean(self) -> float:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def inverse_cdf(self, u: float) -> float:
        """Generalized inverse CDF, monotone nondecreasing in ``u``."""
        if not 0.0 <= u <= 1.0:
            raise DomainError(f"u must lie in [0, 1], got {u}")
        return float(self._icdf(np.asarray([u]))[0])

    def _icdf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw rewards by inverse-CDF sampling from ``rng``'s uniform stream."""
        u = np.clip(rng.random(size), _COIN_EPS, 1.0 - _COIN_EPS)
        out = self._icdf(np.atleast_1d(u))
        return out if size is not None else float(out[0])


@dataclass(frozen=True)
class Bernoulli(ArmDistribution):
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigurationError(f"Bernoulli p must lie in [0, 1], got {self.p}")

    def mean(self) -> float:
        return self.p

    def cdf(self, x: float) -> float:
        if x < 0.0:
            return 0.0
        if x < 1.0:
            return 1.0 - self.p
        return 1.0

    def _icdf(self, u: np.ndarray) -> np.ndarray:
        return (u > 1.0 - self.p).astype(float)


@dataclass(frozen=True)
class Uniform(ArmDistribution):
    a: float
    b: float

    def __post_init__(self):
        if not self.a <= self.b:
            raise ConfigurationError(f"Uniform needs a <= b, got ({self.a}, {self.b})")

    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    def cdf(self, x: float) -> float:
        if x <= self.a:
            return 0.0
        if x >= self.b:
            return 1.0
        return (x - self.a) / (self.b - self.a)

    def _icdf(self, u: np.ndarray) -> np.ndarray:
        return self.a + (self.b - self.a) * u


@dataclass(frozen=True)
class Gaussian(ArmDistribution):
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ConfigurationError(f"Gaussian sigma must be >= 0, got {self.sigma}")

    def mean(self) -> float:
        return self.mu

    def cdf(self, x: float) -> float:
        if self.sigma == 0.0:
            return 0.0 if x < self.mu else 1.0
        return float(stats.norm.cdf(x, loc=self.mu, scale=self.sigma))

    def _icdf(self, u: np.ndarray) -> np.ndarray:
        if self.sigma == 0.0:
            return np.full_like(u, self.mu, dtype=float)
        return stats.norm.ppf(u, loc=self.mu, scale=self.sigma)


@dataclass(frozen=True)
class Categorical(ArmDistribution):
    """Rewards on the integer support {0, ..., K-1} with given probabilities."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        values = tuple(int(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        if values != tuple(range(len(values))):
            raise ConfigurationError(
                f"Categorical values must be the integers 0..K-1, got {values}"
            )
        if len(probs) != len(values) or any(p < 0.0 for p in probs):
            raise ConfigurationError("Categorical probs must be nonnegative, one per value")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ConfigurationError(f"Categorical probs must sum to 1, got {sum(probs)}")

    def mean(self) -> float:
        return float(sum(v * p for v, p in zip(self.values, self.probs)))

    def cdf(self, x: float) -> float:
        return float(sum(p for v, p in zip(self.values, self.probs) if v <= x))

    def _icdf(self, u: np.ndarray) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        return np.searchsorted(cum, u, side="left").astype(float)


def inverse_cdf(arm: ArmDistribution, u: float) -> float:
    """Generalized inverse CDF of ``arm`` at ``u`` in [0, 1]."""
    return arm.inverse_cdf(u)


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BanditInstance:
    """A fixed problem: one reward distribution per arm.

    ``true_means`` may be supplied for validation/regret accounting; when
    present each entry must equal the analytic mean of its arm.
    """

    arms: tuple
    true_means: tuple | None = None
    label: str = ""

    def __post_init__(self):
        arms = tuple(self.arms)
        object.__setattr__(self, "arms", arms)
        if len(arms) < 1:
            raise ConfigurationError("BanditInstance needs at least one arm")
        if self.true_means is not None:
            means = tuple(float(m) for m in self.true_means)
            object.__setattr__(self, "true_means", means)
            if len(means) != len(arms):
                raise ConfigurationError("true_means length must match arm count")
            for i, (arm, m) in enumerate(zip(arms, means)):
                if abs(arm.mean() - m) > 1e-12:
                    raise ConfigurationError(
                        f"true_means[{i}]={m} differs from analytic mean {arm.mean()}"
                    )

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def means(self) -> np.ndarray:
        if self.true_means is not None:
            return np.asarray(self.true_means, dtype=float)
        return np.asarray([a.mean() for a in self.arms], dtype=float)

    def gaps(self) -> np.ndarray:
        """Per-arm suboptimality gaps max_j mu_j - mu_i."""
        mu = self.means()
        return mu.max() - mu


@dataclass(frozen=True)
class ContextualInstance:
    """Linear-payoff contextual problem.

    Each round every arm gets a fresh context from a fixed per-arm
    distribution (standard normal by default); the payoff of pulling arm i is
    theta_star . x_{t,i} plus Gaussian noise.
    """

    d: int
    theta_star: tuple
    n_arms: int = 2
    noise_sigma: float = 0.1
    context_scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError("context dimension d must be >= 1")
        if self.n_arms < 1:
            raise ConfigurationError("n_arms must be >= 1")
        theta = tuple(float(v) for v in self.theta_star)
        object.__setattr__(self, "theta_star", theta)
        if len(theta) != self.d:
            raise ConfigurationError("theta_star length must equal d")
        if not all(math.isfinite(v) for v in theta):
            raise ConfigurationError("theta_star must be finite")
        if self.noise_sigma < 0.0:
            raise ConfigurationError("noise_sigma must be >= 0")

    def draw_contexts(self, rng: np.random.Generator, rounds: int) -> np.ndarray:
        """Pre-draw contexts of shape (rounds, n_arms, d); all finite."""
        return self.context_scale * rng.standard_normal((rounds, self.n_arms, self.d))


@dataclass(frozen=True)
class GPInstance:
    """Finite-grid objective for Gaussian-process bandits.

    ``grid`` holds the domain points (n, d); ``f`` their objective values, all
    inside [0, h_bound]; observations add Gaussian noise of variance
    ``noise_var``.
    """

    grid: np.ndarray
    f: np.ndarray
    noise_var: float
    h_bound: float
    label: str = ""

    def __post_init__(self):
        grid = np.atleast_2d(np.asarray(self.grid, dtype=float))
        f = np.asarray(self.f, dtype=float)
        grid.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "f", f)
        if grid.shape[0] < 1:
            raise ConfigurationError("GP grid must contain at least one point")
        if f.shape != (grid.shape[0],):
            raise ConfigurationError("f must hold one value per grid point")
        if not np.all(np.isfinite(f)):
            raise ConfigurationError("f values must be finite")
        if self.noise_var < 0.0:
            raise ConfigurationError("noise_var must be >= 0")
        if f.min() < -1e-12 or f.max() > self.h_bound + 1e-12:
            raise ConfigurationError("f values must lie in [0, h_bound]")

    @property
    def n_points(self) -> int:
        return int(self.grid.shape[0])

    def best_value(self) -> float:
        return float(self.f.max())


# ---------------------------------------------------------------------------
# Task meta-distributions
# ---------------------------------------------------------------------------


class TaskDistribution:
    """A distribution over bandit problems; ``sample`` must be deterministic
    in the generator state and always return a valid instance."""

    name = "custom"

    def sample(self, rng: np.random.Generator) -> BanditInstance:
        raise NotImplementedError

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class BernoulliFamily(TaskDistribution):
    """Two Bernoulli arms: arm 1 fixed at p = 0.5; arm 2's parameter drawn
    from N(center, sigma^2) and clamped into [0, 1]."""

    sigma: float
    center: float = 0.5
    name: str = dataclasses.field(default="bernoulli", init=False)

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")

    def sample(self, rng: np.random.Generator) -> BanditInstance:
        p2 = float(np.clip(self.center + self.sigma * rng.standard_normal(), 0.0, 1.0))
        return BanditInstance(
            arms=(Bernoulli(0.5), Bernoulli(p2)),
            true_means=(0.5, p2),
            label=f"bernoulli(center={self.center},sigma={self.sigma})",
        )

    def params(self) -> dict:
        return {"sigma": self.sigma, "center": self.center}


@dataclass(frozen=True)
class UniformFamily(TaskDistribution):
    """Arm 1 = U[2, 6]; arm 2 = U[4.1 - w, 4.1 + w] with half-width
    w ~ N(1.5, sigma^2) clamped at 0."""

    sigma: float
    name: str = dataclasses.field(default="uniform", init=False)

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")

    def sample(self, rng: np.random.Generator) -> BanditInstance:
        w = max(0.0, float(rng.normal(1.5, self.sigma)))
        return BanditInstance(
            arms=(Uniform(2.0, 6.0), Uniform(4.1 - w, 4.1 + w)),
            true_means=(4.0, 4.1),
            label=f"uniform(sigma={self.sigma})",
        )

    def params(self) -> dict:
        return {"sigma": self.sigma}


@dataclass(frozen=True)
class GaussianFamily(TaskDistribution):
    """Arm 1 = N(4, 1); arm 2 = N(4.1, sigma^2).

    With ``variance_range`` set, arm 2's variance is instead drawn uniformly
    from that range each task and ``sigma`` may be None.
    """

    sigma: float | None
    variance_range: tuple | None = None
    name: str = dataclasses.field(default="gaussian", init=False)

    def __post_init__(self):
        if self.variance_range is not None:
            lo, hi = self.variance_range
            if not 0.0 <= lo <= hi:
                raise ConfigurationError(f"bad variance_range {self.variance_range}")
        elif self.sigma is None or self.sigma < 0.0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")

    def sample(self, rng: np.random.Generator) -> BanditInstance:
        if self.variance_range is not None:
            lo, hi = self.variance_range
            sd2 = math.sqrt(float(rng.uniform(lo, hi)))
        else:
            sd2 = float(self.sigma)
        return BanditInstance(
            arms=(Gaussian(4.0, 1.0), Gaussian(4.1, sd2)),
            true_means=(4.0, 4.1),
            label=f"gaussian(sigma={self.sigma},variance_range={self.variance_range})",
        )

    def params(self) -> dict:
        return {"sigma": self.sigma, "variance_range": self.variance_range}


@dataclass(frozen=True)
class CustomFamily(TaskDistribution):
    """Wraps an arbitrary sampler ``rng -> BanditInstance``; a point mass is
    the special case of a sampler ignoring its generator."""

    sampler: Callable[[np.random.Generator], BanditInstance]
    label: str = "custom"
    name: str = dataclasses.field(default="custom", init=False)

    def sample(self, rng: np.random.Generator) -> BanditInstance:
        instance = self.sampler(rng)
        if not isinstance(instance, BanditInstance):
            raise ConfigurationError("custom sampler must return a BanditInstance")
        return instance

    def params(self) -> dict:
        return {"label": self.label}


def sample_task(dist: TaskDistribution, seed: int) -> BanditInstance:
    """Draw one task from the meta-distribution, deterministically in ``seed``."""
    return dist.sample(np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# Reward tapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RewardTape:
    """Pre-drawn rewards: ``rewards[i, j]`` is revealed on the j-th pull of
    arm i.  Immutable; safe to share across workers."""

    rewards: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        rewards = np.atleast_2d(np.asarray(self.rewards, dtype=float))
        rewards.setflags(write=False)
        object.__setattr__(self, "rewards", rewards)
        if not np.all(np.isfinite(rewards)):
            raise ConfigurationError("tape entries must be finite")

    @property
    def n_arms(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def pulls_per_arm(self) -> int:
        return int(self.rewards.shape[1])


def draw_tape(
    instance: BanditInstance,
    pulls_per_arm: int,
    seed: int,
    clip: float | None = None,
) -> RewardTape:
    """Realize the random coins for ``instance``: draw uniforms z[i, j] from
    the seeded stream and push them through each arm's inverse CDF.

    ``clip`` bounds rewards into [0, clip] when set.
    """
    if pulls_per_arm < 1:
        raise ConfigurationError("pulls_per_arm must be >= 1")
    rng = np.random.default_rng(seed)
    z = np.clip(rng.random((instance.n_arms, pulls_per_arm)), _COIN_EPS, 1.0 - _COIN_EPS)
    rows = [arm._icdf(z[i]) for i, arm in enumerate(instance.arms)]
    rewards = np.vstack(rows)
    if clip is not None:
        rewards = np.clip(rewards, 0.0, clip)
    return RewardTape(rewards=rewards, seed=seed)


# ---------------------------------------------------------------------------
# Offline reward logs
# ---------------------------------------------------------------------------

_LOG_HEADER = ["task_id", "arm_id", "pull_index", "reward"]


def load_tapes(
    path,
    extend_to: int | None = None,
    extension_seed: int = 0,
) -> list:
    """Read an offline reward log into per-task tapes.

    The CSV must carry the header ``task_id,arm_id,pull_index,reward`` with
    0-based contiguous pull indices per (task, arm).  With ``extend_to`` set,
    each arm's sequence is extended to that horizon by Gaussian draws with the
    arm's empirical mean and standard deviation (the surrogate protocol for
    truncated real logs); otherwise all arms of a task must share one length.

    Returns ``[(task_id, RewardTape), ...]`` ordered by first appearance.
    """
    entries: dict = {}
    order: list = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TapeFormatError(f"{path}: empty file") from None
        if [h.strip() for h in header] != _LOG_HEADER:
            raise TapeFormatError(
                f"{path}: expected header {','.join(_LOG_HEADER)}, got {','.join(header)}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise TapeFormatError(f"{path} row {row_no}: expected 4 columns")
            task_id = row[0].strip()
            try:
                arm_id = int(row[1])
                pull_index = int(row[2])
                reward = float(row[3])
            except ValueError as exc:
                raise TapeFormatError(f"{path} row {row_no}: {exc}") from None
            if math.isnan(reward):
                raise TapeFormatError(f"{path} row {row_no}: NaN reward")
            if arm_id < 0 or pull_index < 0:
                raise TapeFormatError(
                    f"{path} row {row_no}: arm_id and pull_index must be >= 0"
                )
            key = (task_id, arm_id)
            if key not in entries:
                entries[key] = []
                if task_id not in order:
                    order.append(task_id)
            entries[key].append((pull_index, reward, row_no))

    tapes = []
    for task_id in order:
        arm_ids = sorted(a for (t, a) in entries if t == task_id)
        if arm_ids != list(range(len(arm_ids))):
            raise TapeFormatError(f"{path}: task {task_id} arm ids must be 0..n-1")
        sequences = []
        for arm_id in arm_ids:
            rows = sorted(entries[(task_id, arm_id)])
            for pos, (pull_index, _, row_no) in enumerate(rows):
                if pull_index != pos:
                    raise TapeFormatError(
                        f"{path} row {row_no}: pull_index {pull_index} breaks "
                        f"contiguity for task {task_id} arm {arm_id} (expected {pos})"
                    )
            sequences.append([r for (_, r, _) in rows])

        if extend_to is not None:
            rng = np.random.default_rng([extension_seed, _stable_id(task_id)])
            extended = []
            for seq in sequences:
                if len(seq) > extend_to:
                    raise TapeFormatError(
                        f"{path}: task {task_id} has {len(seq)} pulls, "
                        f"more than extend_to={extend_to}"
                    )
                obs = np.asarray(seq, dtype=float)
                need = extend_to - len(seq)
                if need > 0:
                    sd = float(obs.std(ddof=1)) if len(obs) > 1 else 0.0
                    extra = rng.normal(float(obs.mean()), sd, size=need)
                    obs = np.concatenate([obs, extra])
                extended.append(obs)
            sequences = extended
        else:
            lengths = {len(s) for s in sequences}
            if len(lengths) != 1:
                raise TapeFormatError(
                    f"{path}: task {task_id} arms have unequal pull counts "
                    f"{sorted(lengths)}; pass extend_to to equalize"
                )
        tapes.append((task_id, RewardTape(rewards=np.asarray(sequences, dtype=float))))
    return tapes


def save_tapes(path, items: Sequence) -> None:
    """Write ``[(task_id, RewardTape), ...]`` in the offline log schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_LOG_HEADER)
        for task_id, tape in items:
            for arm_id in range(tape.n_arms):
                for j in range(tape.pulls_per_arm):
                    writer.writerow([task_id, arm_id, j, repr(float(tape.rewards[arm_id, j]))])


def _stable_id(task_id: str) -> int:
    """Deterministic nonnegative integer for a task id (hash() is salted)."""
    return int.from_bytes(task_id.encode("utf-8")[:8].ljust(8, b"\0"), "big")
