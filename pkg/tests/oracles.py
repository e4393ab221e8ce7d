"""Independent slow reference implementations used as test oracles."""

from __future__ import annotations

import itertools

import numpy as np


def naive_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Per-window SSIM with an explicit double loop over valid windows."""
    n, sigma = 11, 1.5
    ax = np.arange(n) - n // 2
    w2 = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma**2))
    w2 /= w2.sum()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(a.shape[0] - n + 1):
        for j in range(a.shape[1] - n + 1):
            pa, pb = a[i:i + n, j:j + n], b[i:i + n, j:j + n]
            ma, mb = (w2 * pa).sum(), (w2 * pb).sum()
            va = (w2 * (pa - ma) ** 2).sum()
            vb = (w2 * (pb - mb) ** 2).sum()
            cov = (w2 * (pa - ma) * (pb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2))
                        / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def brute_force_2means(x: np.ndarray) -> float:
    """Lowest 2-cluster inertia over every bipartition of the rows of ``x``."""
    best = None
    for mask in itertools.product([0, 1], repeat=len(x)):
        m = np.array(mask)
        if m.all() or not m.any():
            continue
        cost = sum(((x[m == g] - x[m == g].mean(0)) ** 2).sum() for g in (0, 1))
        best = cost if best is None else min(best, cost)
    return float(best)
