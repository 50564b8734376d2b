"""Shared test oracles, written independently of the library internals."""

import math

import numpy as np
import pytest


def naive_ucb_choices(rewards, alpha, horizon):
    """Straight-line reference simulator for the index policy.

    Kept deliberately separate from the library: dict state, explicit loop,
    index recomputed from scratch each round.  The log argument is the number
    of completed pulls.
    """
    n = len(rewards)
    pulls = {i: 0 for i in range(n)}
    sums = {i: 0.0 for i in range(n)}
    choices = []
    for t in range(1, horizon + 1):
        if t <= n:
            arm = t - 1
        elif n == 1:
            arm = 0
        else:
            done = sum(pulls.values())
            best_val, arm = None, None
            for i in range(n):
                val = sums[i] / pulls[i] + math.sqrt(alpha * math.log(done) / pulls[i])
                if best_val is None or val > best_val + 0.0:
                    best_val, arm = val, i
        r = rewards[arm][pulls[arm]]
        pulls[arm] += 1
        sums[arm] += r
        choices.append(arm)
    return choices


def naive_prior_choices(rewards, alpha, prior, horizon):
    """Reference simulator for the pseudo-pull warm start (no init phase)."""
    n = len(rewards)
    pulls = {i: 1 for i in range(n)}
    sums = {i: float(prior[i]) for i in range(n)}
    consumed = {i: 0 for i in range(n)}
    choices = []
    for _ in range(horizon):
        if n == 1:
            arm = 0
        else:
            done = sum(pulls.values())
            best_val, arm = None, None
            for i in range(n):
                val = sums[i] / pulls[i] + math.sqrt(alpha * math.log(done) / pulls[i])
                if best_val is None or val > best_val:
                    best_val, arm = val, i
        r = rewards[arm][consumed[arm]]
        consumed[arm] += 1
        pulls[arm] += 1
        sums[arm] += r
        choices.append(arm)
    return choices


def vector_ucb_choices(rows, alphas, horizon):
    """Grid-scan oracle: simulate the index policy for a whole alpha vector.

    Direct simulation (no recursion), vectorized across alphas only; the
    per-round update is the same arithmetic as naive_ucb_choices.  Returns an
    int array of shape (len(alphas), horizon).
    """
    rows = np.asarray(rows, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    n = rows.shape[0]
    A = alphas.shape[0]
    pulls = np.zeros((A, n), dtype=np.int64)
    sums = np.zeros((A, n))
    choices = np.empty((A, horizon), dtype=np.int64)
    lanes = np.arange(A)
    for t in range(1, horizon + 1):
        if t <= n:
            arm = np.full(A, t - 1, dtype=np.int64)
        else:
            width = np.sqrt(alphas[:, None] * math.log(t - 1) / pulls)
            arm = np.argmax(sums / pulls + width, axis=1)
        r = rows[arm, pulls[lanes, arm]]
        sums[lanes, arm] += r
        pulls[lanes, arm] += 1
        choices[:, t - 1] = arm
    return choices


def switch_brackets(alphas, behaviors):
    """Grid cells (alphas[k], alphas[k+1]] where the behavior changes."""
    out = []
    for k in range(len(alphas) - 1):
        if not np.array_equal(behaviors[k], behaviors[k + 1]):
            out.append((alphas[k], alphas[k + 1]))
    return out


def naive_pseudo_loss(choices, means, horizon):
    """Average pseudo-regret from a choice sequence, summed in arm order."""
    means = list(means)
    best = max(means)
    counts = [0] * len(means)
    for c in choices[:horizon]:
        counts[c] += 1
    return sum(counts[i] * (best - means[i]) for i in range(len(means))) / horizon


def dense_gp_oracle(kernel, Xo, yo, s, queries, jitter=1e-10):
    """Posterior oracle by direct dense solve (no Cholesky)."""
    Xo = np.atleast_2d(Xo)
    queries = np.atleast_2d(queries)
    A = kernel(Xo, Xo) + (s + jitter) * np.eye(len(Xo))
    Ainv = np.linalg.inv(A)
    Kq = kernel(Xo, queries)
    mu = Kq.T @ (Ainv @ np.asarray(yo))
    width = np.diag(kernel(queries, queries)) - np.diag(Kq.T @ Ainv @ Kq)
    return mu, width


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
