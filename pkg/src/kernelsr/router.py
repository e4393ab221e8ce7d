"""Per-cluster model registry and kernel-based routing of LR images."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DatasetManifest, ManifestEntry
from .degrade import save_kernel
from .errors import KernelSRError, ParameterError
from .imagecore import load_image, save_image
from .kernelcluster import Clustering, center_distances, flatten_kernel, kernel_side
from .kernelest import KernelEstConfig, estimate_kernel_blind
from .srmodels import SrConfig, sr_ibp


@dataclass
class ModelRegistry:
    """One representative kernel (and SR settings) per cluster."""

    clustering: Clustering
    kernels: list[np.ndarray]
    sr_config: SrConfig = field(default_factory=SrConfig)

    def __len__(self) -> int:
        return len(self.kernels)


@dataclass
class RouteReport:
    image_id: str
    kernel: np.ndarray | None = None
    cluster: int | None = None
    distance: float | None = None
    distances: list[float] = field(default_factory=list)
    output: str | None = None
    kernel_path: str | None = None
    error: str | None = None

    def to_json(self) -> str:
        doc = {"id": self.image_id, "cluster": self.cluster, "distance": self.distance,
               "distances": self.distances, "kernel_path": self.kernel_path, "output": self.output}
        if self.error is not None:
            doc["error"] = self.error
        return json.dumps(doc)


def representative_kernel(center: np.ndarray) -> np.ndarray:
    k = np.where(center > 0, center, 0.0).reshape(kernel_side(center.size), -1)
    total = k.sum()
    if not total > 0:
        raise ParameterError("cluster center has no positive weight")
    return k / total


def build_registry(clustering: Clustering, sr_defaults: SrConfig = SrConfig()) -> ModelRegistry:
    """Unflatten every cluster center into a clamped, renormalized kernel."""
    kernel_side(clustering.dims)
    kernels = [representative_kernel(c) for c in clustering.centers]
    return ModelRegistry(clustering, kernels, sr_defaults)


def route(lr: np.ndarray, registry: ModelRegistry, est_cfg: KernelEstConfig = KernelEstConfig(),
          image_id: str = "") -> tuple[RouteReport, np.ndarray]:
    """Estimate the kernel of ``lr``, pick the nearest cluster and restore with its kernel."""
    try:
        kernel = estimate_kernel_blind(lr, est_cfg)
    except KernelSRError as exc:
        raise type(exc)(f"{image_id}: {exc}") from exc
    dists = center_distances(flatten_kernel(kernel), registry.clustering)
    idx = int(np.argmin(dists))
    out = sr_ibp(lr, registry.kernels[idx], registry.sr_config)
    report = RouteReport(image_id, kernel, idx, float(dists[idx]), [float(d) for d in dists])
    return report, out


def output_name(entry: ManifestEntry, path: Path) -> str:
    suffix = path.suffix.lower()
    return f"{entry.id}_sr{suffix if suffix in ('.png', '.pgm', '.ppm') else '.ppm'}"


def _route_entry(args) -> RouteReport:
    entry, path, registry, est_cfg, out_dir = args
    try:
        lr = load_image(path)
        report, img = route(lr, registry, est_cfg, entry.id)
        out_path = out_dir / output_name(entry, path)
        if out_path.suffix == ".pgm" and img.ndim == 3:
            out_path = out_path.with_suffix(".ppm")
        save_image(img, out_path)
        kpath = out_dir / f"{entry.id}_kernel.srk"
        save_kernel(report.kernel, kpath)
        report.output = out_path.name
        report.kernel_path = kpath.name
    except (KernelSRError, OSError, ValueError) as exc:
        report = RouteReport(entry.id, error=f"{type(exc).__name__}: {exc}")
    return report


def batch_apply(manifest: DatasetManifest, registry: ModelRegistry, out_dir: str | os.PathLike,
                est_cfg: KernelEstConfig = KernelEstConfig(), jobs: int = 1) -> list[RouteReport]:
    """Route every manifest entry, writing ``<id>_sr`` images and kernels to ``out_dir``.

    Failures are recorded in the report of the failing entry and do not stop
    the batch. Reports come back in manifest order for any ``jobs``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(e, manifest.resolve(e), registry, est_cfg, out_dir) for e in manifest.entries]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_route_entry, tasks))
    return [_route_entry(t) for t in tasks]


def write_reports(reports: list[RouteReport], path: str | os.PathLike) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in reports))


def read_reports(path: str | os.PathLike) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
