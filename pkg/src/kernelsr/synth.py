"""Seeded synthetic data: textured HR images and a 7-member kernel family.

Textures mix a dead-leaves image (occluding disks with power-law radii,
sharp edges at every scale) with 1/f Gaussian noise. Both are approximately
scale invariant, which is what cross-scale kernel estimation relies on.
"""

from __future__ import annotations

import math

import numpy as np

from .corpus import KERNEL_CLUSTER_SOURCES, cluster_equipment
from .kernelest import DEFAULT_KERNEL_SIZE, GaussianKernelParams, make_gaussian_kernel

# One member per cluster of the published 7-cluster grouping. Widths in HR
# pixels at scale 2.
FAMILY_PARAMS = (
    GaussianKernelParams(0.8, 0.8, 0.0),
    GaussianKernelParams(1.6, 1.6, 0.0),
    GaussianKernelParams(2.8, 2.8, 0.0),
    GaussianKernelParams(3.0, 1.0, 0.0),
    GaussianKernelParams(3.0, 1.0, math.pi / 2),
    GaussianKernelParams(3.0, 1.0, math.pi / 4),
    GaussianKernelParams(2.4, 1.2, 3 * math.pi / 4),
)


def dead_leaves(n: int, rng: np.random.Generator, count: int = 5000,
                rmin: float = 1.5, rmax: float | None = None) -> np.ndarray:
    """Square dead-leaves image with radius density proportional to r^-3."""
    rmax = rmax or n / 5
    img = np.full((n, n), rng.random())
    u = rng.random(count)
    a, b = rmin ** -2, rmax ** -2
    radii = np.sort((a - u * (a - b)) ** -0.5)[::-1]
    centers = rng.random((count, 2)) * n
    values = rng.random(count)
    for rad, (cy, cx), v in zip(radii, centers, values):
        y0, y1 = max(int(cy - rad), 0), min(int(cy + rad) + 2, n)
        x0, x1 = max(int(cx - rad), 0), min(int(cx + rad) + 2, n)
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.ogrid[y0:y1, x0:x1]
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < rad * rad
        img[y0:y1, x0:x1][mask] = v
    return img


def pink_noise(n: int, rng: np.random.Generator, beta: float = 2.0) -> np.ndarray:
    """Gaussian field with power spectrum ~ 1/f^beta, rescaled to [0, 1]."""
    f = np.fft.fftfreq(n)
    r = np.hypot(f[None, :], f[:, None])
    r[0, 0] = 1.0
    spectrum = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / r ** (beta / 2)
    spectrum[0, 0] = 0.0
    x = np.real(np.fft.ifft2(spectrum))
    return (x - x.min()) / (x.max() - x.min())


def textured_image(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.clip(0.6 * dead_leaves(n, rng) + 0.4 * pink_noise(n, rng), 0.0, 1.0)


def family_kernels(size: int = DEFAULT_KERNEL_SIZE) -> list[np.ndarray]:
    return [make_gaussian_kernel(p, size) for p in FAMILY_PARAMS]


def jittered_family(per_member: int, seed: int, size: int = DEFAULT_KERNEL_SIZE,
                    rel_sigma: float = 0.05, theta_jitter: float = 0.05) -> tuple[list[np.ndarray], list[int]]:
    """Perturbed copies of every family member, imitating noisy estimates.

    Widths are scaled by ``1 + rel_sigma * N(0, 1)`` and angles shifted by
    ``theta_jitter * N(0, 1)``. Returns kernels and their member index.
    """
    rng = np.random.default_rng(seed)
    kernels, labels = [], []
    for i, p in enumerate(FAMILY_PARAMS):
        for _ in range(per_member):
            s1 = p.sigma_major * (1 + rel_sigma * rng.standard_normal())
            s2 = p.sigma_minor * (1 + rel_sigma * rng.standard_normal())
            th = p.theta + theta_jitter * rng.standard_normal()
            q = GaussianKernelParams.from_any(max(s1, 0.1), max(s2, 0.1), th)
            kernels.append(make_gaussian_kernel(q, size))
            labels.append(i)
    return kernels, labels


def corpus_labels(per_member: int) -> list[tuple[int, str, str]]:
    """(member, source_category, equipment) for each synthetic image.

    Names cycle through the sources listed for the matching cluster.
    """
    out = []
    for member in range(len(FAMILY_PARAMS)):
        names = cluster_equipment(member % len(KERNEL_CLUSTER_SOURCES))
        for j in range(per_member):
            cat, eq = names[j % len(names)]
            out.append((member, cat, eq))
    return out

