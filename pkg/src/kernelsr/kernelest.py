"""Degradation-kernel estimation.

Two estimators share the correlation convention of :mod:`kernelsr.degrade`:

* :func:`estimate_kernel_nonblind` solves a ridge least-squares problem for
  the kernel given an aligned HR/LR pair (a validation oracle).
* :func:`estimate_kernel_blind` needs only the LR image. It searches the
  anisotropic-Gaussian family for the kernel whose downscaled copy of the LR
  image reproduces the LR image's own patch distribution (cross-scale patch
  recurrence). Coarse grid first, then Nelder-Mead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import optimize

from .degrade import PAD_MODES, PlaneCorrelator, crop_to_multiple
from .errors import NumericalError, ParameterError
from .imagecore import check_image, to_luma

DEFAULT_KERNEL_SIZE = 33

# candidate widths (LR pixels) and orientations for the coarse search
GRID_SIGMAS = (0.6, 1.0, 1.5, 2.0, 2.7, 3.5, 4.5)
GRID_THETAS = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)
SIGMA_RANGE = (0.2, 6.0)

MAX_POOL = 4096
NONBLIND_MAX_PIXELS = 20_000
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class KernelEstConfig:
    kernel_size: int = DEFAULT_KERNEL_SIZE
    scale: int = 2
    max_evals: int = 400
    patch_size: int = 5
    sample_patches: int = 512
    ridge: float = 1e-8
    seed: int = 0
    pool_size: int = 2048

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.scale < 1:
            raise ParameterError(f"scale must be >= 1, got {self.scale}")
        if self.max_evals < 1:
            raise ParameterError(f"max_evals must be >= 1, got {self.max_evals}")
        if self.patch_size < 1 or self.sample_patches < 1:
            raise ParameterError("patch_size and sample_patches must be positive")
        if not self.sample_patches <= self.pool_size <= MAX_POOL:
            raise ParameterError(f"need sample_patches <= pool_size <= {MAX_POOL}")


@dataclass(frozen=True)
class GaussianKernelParams:
    """Anisotropic Gaussian: widths along/across the major axis, axis angle.

    ``theta`` is measured from the column (x) axis towards increasing row
    index and is wrapped into [0, pi).
    """

    sigma_major: float
    sigma_minor: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.sigma_minor > 0 and math.isfinite(self.sigma_major)):
            raise ParameterError(f"sigmas must be positive and finite, got "
                                 f"{self.sigma_major}, {self.sigma_minor}")
        if self.sigma_major < self.sigma_minor:
            raise ParameterError("sigma_major must be >= sigma_minor")
        theta = float(self.theta) % math.pi
        # tiny negative angles wrap to exactly pi in floating point
        object.__setattr__(self, "theta", 0.0 if theta >= math.pi else theta)

    @classmethod
    def from_any(cls, s1: float, s2: float, theta: float) -> "GaussianKernelParams":
        """Order the two widths, rotating the axis by pi/2 when they swap."""
        if s2 > s1:
            return cls(s2, s1, theta + math.pi / 2)
        return cls(s1, s2, theta)


def make_gaussian_kernel(p: GaussianKernelParams, size: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """Sample the Gaussian at pixel centers on a ``size`` x ``size`` grid, sum 1."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {size}")
    r = size // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    c, s = math.cos(p.theta), math.sin(p.theta)
    u = c * x + s * y
    v = -s * x + c * y
    k = np.exp(-0.5 * ((u / p.sigma_major) ** 2 + (v / p.sigma_minor) ** 2))
    total = k.sum()
    if not (total > 0 and math.isfinite(total)):
        raise ParameterError(f"degenerate Gaussian parameters {p}")
    return k / total


def _shift(k: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(k)
    h, w = k.shape
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    out[dst_y, dst_x] = k[src_y, src_x]
    return out


def normalize_kernel(k: np.ndarray) -> np.ndarray:
    """Clamp negatives, rescale to sum 1 and re-center.

    When the center of mass sits one pixel or more away from the geometric
    center along an axis, the kernel is translated by the rounded offset.
    """
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
        raise ParameterError(f"kernel must be square with odd size, got {k.shape}")
    k = np.where(k > 0, k, 0.0)
    total = k.sum()
    if not total > 0:
        raise ParameterError("kernel has no positive weight")
    k = k / total
    r = k.shape[0] // 2
    idx = np.arange(k.shape[0]) - r
    cy = float(k.sum(axis=1) @ idx)
    cx = float(k.sum(axis=0) @ idx)
    dy = -int(round(cy)) if abs(cy) >= 1 else 0
    dx = -int(round(cx)) if abs(cx) >= 1 else 0
    if dy or dx:
        k = _shift(k, dy, dx)
        k = k / k.sum()
    return k


def kernel_ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized cross-correlation <a, b> / (|a| |b|) of two kernels."""
    a = np.ravel(a)
    b = np.ravel(b)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def bicubic_equivalent_kernel(scale: int, size: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """Separable antialiasing Catmull-Rom kernel for ``scale``x downscaling.

    Has negative lobes, so it is not a valid degradation kernel; it serves as
    the baseline the blind estimator is compared against on its objective.
    """
    from .srmodels import cubic_weight

    r = size // 2
    t = np.arange(-r, r + 1) / scale
    h = cubic_weight(t)
    k = np.outer(h, h)
    return k / k.sum()


# --------------------------------------------------------------------------
# non-blind oracle
# --------------------------------------------------------------------------

def estimate_kernel_nonblind(hr: np.ndarray, lr: np.ndarray, scale: int,
                             kernel_size: int = DEFAULT_KERNEL_SIZE, ridge: float = 1e-8,
                             boundary: str = "reflect", max_pixels: int = NONBLIND_MAX_PIXELS,
                             seed: int = 0) -> np.ndarray:
    """Least-squares kernel from an aligned pair.

    Minimizes ``sum((hr (*) k)[::s, ::s] - lr)^2 + ridge * |k|^2`` over all
    ``kernel_size**2`` weights through the normal equations, using at most
    ``max_pixels`` LR pixels (seeded subsample). The solution is clamped
    nonnegative and renormalized.
    """
    hr = to_luma(check_image(hr, "hr"))
    lr = to_luma(check_image(lr, "lr"))
    if scale < 1 or kernel_size < 1 or kernel_size % 2 == 0:
        raise ParameterError("need scale >= 1 and an odd kernel_size")
    hr = crop_to_multiple(hr, scale)
    if lr.shape != (hr.shape[0] // scale, hr.shape[1] // scale):
        raise ParameterError(f"lr shape {lr.shape} does not match hr {hr.shape} at scale {scale}")
    r = kernel_size // 2
    padded = np.pad(hr, r, mode=PAD_MODES[boundary])
    windows = sliding_window_view(padded, (kernel_size, kernel_size))[::scale, ::scale]
    n_px = lr.size
    if n_px > max_pixels:
        picks = np.sort(np.random.default_rng(seed).choice(n_px, size=max_pixels, replace=False))
    else:
        picks = np.arange(n_px)
    rows, cols = np.divmod(picks, lr.shape[1])
    n_unknown = kernel_size * kernel_size
    ata = np.zeros((n_unknown, n_unknown))
    atb = np.zeros(n_unknown)
    for start in range(0, len(picks), 2048):
        sl = slice(start, start + 2048)
        a = windows[rows[sl], cols[sl]].reshape(-1, n_unknown)
        ata += a.T @ a
        atb += a.T @ lr[rows[sl], cols[sl]]
    ata[np.diag_indices(n_unknown)] += ridge
    eig = np.linalg.eigvalsh(ata)
    cond = eig[-1] / eig[0] if eig[0] > 0 else math.inf
    if not cond < MAX_CONDITION:
        raise NumericalError(f"kernel normal equations are singular (condition estimate {cond:.3g})")
    k = np.linalg.solve(ata, atb).reshape(kernel_size, kernel_size)
    return normalize_kernel(k)


# --------------------------------------------------------------------------
# blind estimator
# --------------------------------------------------------------------------

def _augment_db(db: np.ndarray) -> np.ndarray:
    # rows [-2 d, |d|^2]; a query [q, 1] against it gives |q - d|^2 - |q|^2
    return np.hstack([-2.0 * db, np.einsum("ij,ij->i", db, db)[:, None]])


def _augment_query(q: np.ndarray) -> np.ndarray:
    return np.hstack([q, np.ones((q.shape[0], 1))])


def _nn_sqdist(q_aug: np.ndarray, q_norm: np.ndarray, db_aug: np.ndarray,
               exclude_self: bool = False) -> np.ndarray:
    g = q_aug @ db_aug.T
    if exclude_self:
        np.fill_diagonal(g[:, : g.shape[0]], np.inf)
    return np.maximum(g.min(axis=1) + q_norm, 0.0)


class RecurrenceScore:
    """Patch-distribution mismatch between an LR image and its downscaled copy.

    For a candidate kernel, the LR image is blurred and stride-sampled.
    Fixed seeded pools of ``pool_size`` patches are drawn from both images;
    the first ``sample_patches`` of each pool act as queries. The score is the
    symmetrized nearest-neighbour estimate of the KL divergence between the
    two patch distributions::

        d/2 * mean(log(nu / rho))   for each direction

    with ``nu`` the squared distance to the nearest patch of the other pool,
    ``rho`` the squared distance to the nearest other patch of the own pool,
    and ``d`` the patch dimension. The LR-side within-pool distances do not
    depend on the kernel and are computed once.
    """

    EPS = 1e-12

    def __init__(self, lr: np.ndarray, cfg: KernelEstConfig):
        lr = to_luma(check_image(lr, "lr"))
        self.lr = lr
        self.cfg = cfg
        ps = cfg.patch_size
        hd, wd = lr.shape[0] // cfg.scale, lr.shape[1] // cfg.scale
        if min(hd, wd) < ps:
            raise ParameterError("downscaled image smaller than patch size")
        rng = np.random.default_rng(cfg.seed)
        lr_patches = sliding_window_view(lr, (ps, ps)).reshape(-1, ps * ps)
        n_lr = len(lr_patches)
        n_down = (hd - ps + 1) * (wd - ps + 1)
        pool = min(cfg.pool_size, n_lr, n_down)
        if pool <= cfg.sample_patches:
            raise ParameterError("image too small for the requested patch sample")
        self.pool = pool
        self.n = cfg.sample_patches
        self.lr_pool = lr_patches[rng.choice(n_lr, size=pool, replace=False)]
        self.down_idx = rng.choice(n_down, size=pool, replace=False)
        self.down_shape = (hd, wd)
        self.lr_db = _augment_db(self.lr_pool)
        q = self.lr_pool[: self.n]
        self.lr_q = _augment_query(q)
        self.lr_qn = np.einsum("ij,ij->i", q, q)
        self.lr_rho = _nn_sqdist(self.lr_q, self.lr_qn, self.lr_db, exclude_self=True)

    def downscale(self, k: np.ndarray) -> np.ndarray:
        s = self.cfg.scale
        base = crop_to_multiple(self.lr, s)
        return PlaneCorrelator(k, base.shape)(base)[::s, ::s]

    def __call__(self, k: np.ndarray) -> float:
        ps = self.cfg.patch_size
        d = self.downscale(k)
        pool = sliding_window_view(d, (ps, ps)).reshape(-1, ps * ps)[self.down_idx]
        q = pool[: self.n]
        q_aug = _augment_query(q)
        q_norm = np.einsum("ij,ij->i", q, q)
        db = _augment_db(pool)
        rho = _nn_sqdist(q_aug, q_norm, db, exclude_self=True)
        nu = _nn_sqdist(q_aug, q_norm, self.lr_db)
        nu_lr = _nn_sqdist(self.lr_q, self.lr_qn, db)
        eps = self.EPS
        half_d = 0.5 * ps * ps
        kl_down = half_d * np.mean(np.log((nu + eps) / (rho + eps)))
        kl_lr = half_d * np.mean(np.log((nu_lr + eps) / (self.lr_rho + eps)))
        return float(kl_down + kl_lr + 2.0 * math.log(self.pool / (self.pool - 1)))


def recurrence_score(lr: np.ndarray, k: np.ndarray, cfg: KernelEstConfig | None = None) -> float:
    """Evaluate the blind estimator's objective for one kernel."""
    return RecurrenceScore(lr, cfg or KernelEstConfig())(np.asarray(k, dtype=np.float64))


def grid_candidates() -> list[GaussianKernelParams]:
    """Coarse-search candidates in enumeration order (isotropic first per width)."""
    out = []
    for i, a in enumerate(GRID_SIGMAS):
        for b in GRID_SIGMAS[: i + 1]:
            thetas = (0.0,) if a == b else GRID_THETAS
            out.extend(GaussianKernelParams(a, b, t) for t in thetas)
    return out


class _BudgetExhausted(Exception):
    pass


@dataclass
class BlindEstimate:
    kernel: np.ndarray
    params: GaussianKernelParams
    score: float
    evaluations: int


def _params_from_z(z) -> GaussianKernelParams:
    lo, hi = SIGMA_RANGE
    s1 = float(np.clip(math.exp(z[0]), lo, hi))
    s2 = float(np.clip(math.exp(z[1]), lo, hi))
    return GaussianKernelParams.from_any(s1, s2, float(z[2]))


def search_kernel_blind(lr: np.ndarray, cfg: KernelEstConfig = KernelEstConfig()) -> BlindEstimate:
    """Full blind search; returns the kernel together with its parameters and score."""
    lr = to_luma(check_image(lr, "lr"))
    min_side = 8 * cfg.kernel_size
    if min(lr.shape) < min_side:
        raise ParameterError(f"blind estimation needs an LR image of at least {min_side}x{min_side}, "
                             f"got {lr.shape[0]}x{lr.shape[1]}")
    score = RecurrenceScore(lr, cfg)
    best = [math.inf, None]
    evals = [0]

    def evaluate(p: GaussianKernelParams) -> float:
        if evals[0] >= cfg.max_evals:
            raise _BudgetExhausted
        evals[0] += 1
        v = score(make_gaussian_kernel(p, cfg.kernel_size))
        if v < best[0]:
            best[0], best[1] = v, p
        return v

    try:
        for p in grid_candidates():
            evaluate(p)
        start = best[1]
        z0 = np.array([math.log(start.sigma_major), math.log(start.sigma_minor), start.theta])
        simplex = np.array([z0, z0 + [math.log(1.25), 0, 0], z0 + [0, math.log(1.25), 0],
                            z0 + [0, 0, math.pi / 8]])
        optimize.minimize(lambda z: evaluate(_params_from_z(z)), z0, method="Nelder-Mead",
                          options={"initial_simplex": simplex, "maxfev": cfg.max_evals,
                                   "xatol": 1e-3, "fatol": 1e-6})
    except _BudgetExhausted:
        pass
    params = best[1]
    kernel = normalize_kernel(make_gaussian_kernel(params, cfg.kernel_size))
    return BlindEstimate(kernel, params, best[0], evals[0])


def estimate_kernel_blind(lr: np.ndarray, cfg: KernelEstConfig = KernelEstConfig()) -> np.ndarray:
    """Estimate the degradation kernel of a single LR image."""
    return search_kernel_blind(lr, cfg).kernel

