"""Kernel vectors, k-means clustering, nearest-center assignment and 2-D PCA."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ImageIOError, ParameterError


def flatten_kernel(k: np.ndarray) -> np.ndarray:
    """Row-major flatten; a 33x33 kernel becomes a 1089-vector."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ParameterError(f"kernel must be square, got {k.shape}")
    return k.reshape(-1).copy()


def kernel_side(dims: int) -> int:
    side = math.isqrt(dims)
    if side * side != dims or side % 2 == 0:
        raise ParameterError(f"{dims} is not the square of an odd kernel size")
    return side


def unflatten_kernel(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    side = kernel_side(v.size)
    return v.reshape(side, side).copy()


def as_matrix(vectors) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError(f"expected an (n, dims) collection of vectors, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("vectors must be finite")
    return x


# --------------------------------------------------------------------------
# k-means
# --------------------------------------------------------------------------

@dataclass
class Clustering:
    centers: np.ndarray
    assignments: np.ndarray
    inertia: float
    seed: int = 0
    iterations_run: int = 0
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dims(self) -> int:
        return self.centers.shape[1]


def _exact_sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # difference form: no cancellation, used where exact ties and zeros matter
    return np.stack([np.einsum("ij,ij->i", x - c, x - c) for c in centers], axis=1)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    closest = _exact_sq_dists(x, x[idx])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        closest = np.minimum(closest, _exact_sq_dists(x, x[[nxt]])[:, 0])
    return x[idx].copy()


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int, tol: float):
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _exact_sq_dists(x, centers)
        labels = np.argmin(d, axis=1)
        dist = d[np.arange(len(x)), labels]
        history.append(float(dist.sum()))
        new = centers.copy()
        for j in range(len(centers)):
            members = labels == j
            if members.any():
                new[j] = x[members].mean(axis=0)
        for j in range(len(centers)):
            if not (labels == j).any():
                # reseed with the point currently farthest from its center
                far = int(np.argmax(dist))
                new[j] = x[far]
                labels[far] = j
                dist[far] = 0.0
        shift = float(np.max(np.linalg.norm(new - centers, axis=1)))
        centers = new
        if shift <= tol:
            break
    d = _exact_sq_dists(x, centers)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(len(x)), labels].sum())
    return centers, labels, inertia, it, history


def kmeans(vectors, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-12,
           n_init: int = 10) -> Clustering:
    """Lloyd k-means with k-means++ seeding.

    ``n_init`` independent seeded starts are run and the lowest final
    inertia kept (first start wins ties). ``inertia_history`` holds the
    inertia after every assignment step of the kept run.
    """
    x = as_matrix(vectors)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if x.shape[0] < k:
        raise ParameterError(f"need at least k={k} vectors, got {x.shape[0]}")
    if n_init < 1 or max_iter < 1:
        raise ParameterError("n_init and max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        init = _kmeanspp(x, k, rng)
        run = _lloyd(x, init, max_iter, tol)
        if best is None or run[2] < best[2]:
            best = run
    centers, labels, inertia, iters, history = best
    return Clustering(centers, labels, inertia, seed, iters, history)


def assign(v, clustering: Clustering) -> int:
    """Nearest center by Euclidean distance; lowest index on ties."""
    return int(center_distances(v, clustering).argmin())


def center_distances(v, clustering: Clustering) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != clustering.dims:
        raise ParameterError(f"vector has {v.size} dims, clustering has {clustering.dims}")
    return np.sqrt(_exact_sq_dists(v[None, :], clustering.centers)[0])


def recompute_inertia(vectors, clustering: Clustering) -> float:
    x = as_matrix(vectors)
    diff = x - clustering.centers[clustering.assignments]
    return float(np.einsum("ij,ij->", diff, diff))


def silhouette_score(vectors, clustering: Clustering) -> float:
    """Mean silhouette; points whose a and b are both zero score 0."""
    x = as_matrix(vectors)
    labels = np.asarray(clustering.assignments)
    if clustering.k < 2:
        raise ParameterError("silhouette needs k >= 2")
    present = np.unique(labels)
    if len(present) != clustering.k:
        raise ParameterError("silhouette needs every cluster non-empty")
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    scores = np.zeros(len(x))
    for i in range(len(x)):
        own = labels == labels[i]
        n_own = own.sum() - 1
        if n_own == 0:
            continue
        a = dist[i, own].sum() / n_own
        b = min(dist[i, labels == c].mean() for c in present if c != labels[i])
        m = max(a, b)
        scores[i] = 0.0 if m == 0 else (b - a) / m
    return float(scores.mean())


def sweep_k(vectors, ks=range(2, 13), seed: int = 0, **kw) -> list[tuple[int, float, float]]:
    """(k, silhouette, inertia) for each feasible k."""
    x = as_matrix(vectors)
    out = []
    for k in ks:
        if k < 2 or k > x.shape[0] - 1:
            continue
        cl = kmeans(x, k, seed=seed, **kw)
        try:
            s = silhouette_score(x, cl)
        except ParameterError:
            s = -1.0
        out.append((k, s, cl.inertia))
    return out


def best_k(sweep: list[tuple[int, float, float]]) -> int:
    """Highest silhouette; the smaller k wins ties."""
    return max(sweep, key=lambda r: (r[1], -r[0]))[0]


# --------------------------------------------------------------------------
# PCA
# --------------------------------------------------------------------------

@dataclass
class PcaProjection:
    mean: np.ndarray
    components: np.ndarray
    coords: np.ndarray
    explained_variance: np.ndarray

    def transform(self, vectors) -> np.ndarray:
        return (as_matrix(vectors) - self.mean) @ self.components.T


def pca2d(vectors) -> PcaProjection:
    """Top-2 principal axes of the sample covariance.

    Computed from the SVD of the centered data, whose right singular vectors
    are the covariance eigenvectors. Each component is signed so that its
    largest-magnitude entry is positive.
    """
    x = as_matrix(vectors)
    n = x.shape[0]
    if n < 3:
        raise ParameterError(f"PCA needs at least 3 vectors, got {n}")
    mean = x.mean(axis=0)
    xc = x - mean
    _, sv, vt = np.linalg.svd(xc, full_matrices=False)
    if sv[0] <= 1e-12 * max(1.0, float(np.abs(x).max())):
        raise ParameterError("PCA of identical vectors is undefined")
    comps = vt[:2].copy()
    if comps.shape[0] < 2:
        raise ParameterError("need at least 2 dimensions for a 2-D projection")
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1.0
    var = np.zeros(2)
    var[: min(2, len(sv))] = sv[:2] ** 2 / (n - 1)
    return PcaProjection(mean, comps, xc @ comps.T, var)


# --------------------------------------------------------------------------
# files
# --------------------------------------------------------------------------

def scatter_csv(proj: PcaProjection, clustering: Clustering, labels=None) -> str:
    n = proj.coords.shape[0]
    labels = list(labels) if labels else [""] * n
    if len(labels) != n or len(clustering.assignments) != n:
        raise ParameterError("coords, assignments and labels must have equal length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "cluster", "label"])
    for (x, y), c, lab in zip(proj.coords, clustering.assignments, labels):
        w.writerow([f"{x:.17g}", f"{y:.17g}", int(c), lab])
    return buf.getvalue()


def export_scatter(proj: PcaProjection, clustering: Clustering, labels, path: str | os.PathLike,
                   figure_path: str | os.PathLike | None = None) -> None:
    """Write the ``x,y,cluster,label`` CSV and, optionally, a scatter figure."""
    text = scatter_csv(proj, clustering, labels)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
    if figure_path is not None:
        from .plotting import plot_kernel_scatter

        plot_kernel_scatter(proj, clustering, labels, figure_path)


def save_clustering(clustering: Clustering, path: str | os.PathLike) -> None:
    """``SRC1 <k> <dims>`` header, then one line of 17-digit values per center."""
    lines = [f"SRC1 {clustering.k} {clustering.dims}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in clustering.centers]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def load_clustering(path: str | os.PathLike) -> Clustering:
    """Read centers back; assignments are empty and inertia is NaN."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ImageIOError(f"cannot read clustering {path}: {exc}") from exc
    tokens = text.split()
    if len(tokens) < 3 or tokens[0] != "SRC1":
        raise FormatError(f"{path}: not an SRC1 clustering file")
    try:
        k, dims = int(tokens[1]), int(tokens[2])
        values = np.array([float(t) for t in tokens[3:]])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed clustering data: {exc}") from exc
    if k < 1 or dims < 1 or values.size != k * dims:
        raise FormatError(f"{path}: expected {k}x{dims} center values, found {values.size}")
    return Clustering(values.reshape(k, dims), np.zeros(0, dtype=int), math.nan)
