"""
Piecewise structure of the dual loss
====================================

One realized two-arm task, one reward tape.  As the exploration rate
alpha sweeps an interval, the induced pull sequence only changes at
finitely many critical points, so the average regret is a step function
of alpha.  This script computes that step function exactly, checks it
against direct replays, and saves a picture.
"""

import numpy as np

from artifact import (
    BanditInstance,
    Gaussian,
    draw_tape,
    piecewise_dual_ucb,
    run_ucb,
)

HORIZON = 60
ALPHA_RANGE = (0.0, 4.0)
SEED = 11

# A close race: gap 0.15, noisy arms.
instance = BanditInstance(
    arms=(Gaussian(0.55, 0.5), Gaussian(0.40, 0.5)),
    true_means=(0.55, 0.40),
)
tape = draw_tape(instance, HORIZON, SEED)

# Exact structure over the whole range.
loss = piecewise_dual_ucb(tape, instance.true_means, ALPHA_RANGE, HORIZON)
print(f"{loss.q} constant pieces on [{ALPHA_RANGE[0]}, {ALPHA_RANGE[1]}]")
print("first critical points:", np.round(loss.critical_points[:8], 5))

# Every piece interior must replay to the piece's loss.
mids = loss.midpoints()
replayed = np.array(
    [
        run_ucb(tape, float(a), HORIZON, true_means=instance.true_means).average_regret()
        for a in mids
    ]
)
print("max |piece loss - replay at midpoint| =", np.max(np.abs(loss.piece_losses - replayed)))

best = int(np.argmin(loss.piece_losses))
print(
    f"best piece: [{loss.boundaries()[best]:.5f}, {loss.boundaries()[best + 1]:.5f})"
    f" with average regret {loss.piece_losses[best]:.5f}"
)

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = np.concatenate([loss.boundaries()[:-1], [ALPHA_RANGE[1]]])
    plt.step(xs, np.append(loss.piece_losses, loss.piece_losses[-1]), where="post")
    plt.xlabel("exploration rate alpha")
    plt.ylabel("average regret on this tape")
    plt.title(f"{loss.q} pieces, horizon {HORIZON}")
    plt.savefig("dual_structure.png", dpi=120, bbox_inches="tight")
    print("wrote dual_structure.png")
except ImportError:
    pass
