"""Command-line entry point: ``kernelsr <subcommand> ...``.

Exit status is 0 on success, 2 for usage or input errors and 1 for
numerical failures. Every subcommand that writes files also writes a
``run.json`` echo of its settings into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus, degrade, kernelcluster, kernelest, metrics, router, srmodels, synth
from .errors import ImageIOError, KernelSRError, NumericalError
from .imagecore import load_image, save_image

log = logging.getLogger("kernelsr")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


class UsageError(KernelSRError):
    pass


def _write_run_json(out_dir: Path, args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(cfg, indent=2, sort_keys=True, default=str)
    (out_dir / "run.json").write_text(text + "\n")


def _out_file(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _est_config(args) -> kernelest.KernelEstConfig:
    return kernelest.KernelEstConfig(kernel_size=args.kernel_size, scale=args.scale,
                                     max_evals=args.max_evals, patch_size=args.patch_size,
                                     sample_patches=args.sample_patches, ridge=args.ridge,
                                     seed=args.seed)


def _read_kernel(path: Path) -> np.ndarray:
    if not path.exists():
        raise ImageIOError(f"kernel file not found: {path}")
    return degrade.load_kernel(path)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_degrade(args) -> int:
    hr = load_image(args.hr)
    if args.kernel is not None:
        k = degrade.check_kernel(_read_kernel(args.kernel))
    elif args.gaussian is not None:
        s1, s2, th = args.gaussian
        k = kernelest.make_gaussian_kernel(kernelest.GaussianKernelParams.from_any(s1, s2, th),
                                           args.kernel_size)
    else:
        raise UsageError("one of --kernel or --gaussian is required")
    bank = degrade.load_noise_bank(args.noise_dir) if args.noise_dir else None
    lr = degrade.degrade(hr, k, args.scale, bank, seed=args.seed, boundary=args.boundary)
    save_image(lr, _out_file(args.out))
    _write_run_json(args.out.parent, args)
    log.info("wrote %s (%dx%d)", args.out, lr.shape[-1], lr.shape[-2])
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.pair:
        hr, lr = (load_image(p) for p in args.pair)
        k = kernelest.estimate_kernel_nonblind(hr, lr, args.scale, args.kernel_size, args.ridge,
                                               seed=args.seed)
        degrade.save_kernel(k, _out_file(args.out))
        _write_run_json(args.out.parent, args)
        return EXIT_OK
    cfg = _est_config(args)
    inputs = args.blind
    if len(inputs) == 1 and args.out.suffix:
        targets = [_out_file(args.out)]
        out_dir = args.out.parent
    else:
        out_dir = args.out
        out_dir.mkdir(parents=True, exist_ok=True)
        targets = [out_dir / f"{Path(p).stem}.srk" for p in inputs]
    for src, dst in zip(inputs, targets):
        est = kernelest.search_kernel_blind(load_image(src), cfg)
        degrade.save_kernel(est.kernel, dst)
        p = est.params
        log.info("%s: sigma %.3f/%.3f theta %.3f (%d evals)", src, p.sigma_major, p.sigma_minor,
                 p.theta, est.evaluations)
    _write_run_json(out_dir, args)
    return EXIT_OK


def _parse_sweep(text: str) -> range:
    try:
        lo, hi = (int(t) for t in text.split(".."))
    except ValueError:
        raise UsageError(f"--sweep expects LO..HI, got {text!r}") from None
    return range(lo, hi + 1)


def cmd_cluster(args) -> int:
    files = sorted(Path(args.kernel_dir).glob("*.srk"))
    if not files:
        raise UsageError(f"no .srk kernel files in {args.kernel_dir}")
    kernels = [kernelest.normalize_kernel(degrade.load_kernel(f)) for f in files]
    sizes = {k.shape for k in kernels}
    if len(sizes) != 1:
        raise UsageError(f"kernels must share one size, found {sorted(sizes)}")
    if args.k > len(kernels):
        raise UsageError(f"k={args.k} exceeds the number of kernels ({len(kernels)})")
    x = np.array([kernelcluster.flatten_kernel(k) for k in kernels])
    labels = [f.stem for f in files]
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.sweep:
        sweep = kernelcluster.sweep_k(x, _parse_sweep(args.sweep), seed=args.seed)
        lines = ["k,silhouette,inertia"] + [f"{k},{s:.6f},{i:.9g}" for k, s, i in sweep]
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
        print("\n".join(lines))
        if sweep:
            print(f"best k = {kernelcluster.best_k(sweep)}")
    cl = kernelcluster.kmeans(x, args.k, seed=args.seed)
    kernelcluster.save_clustering(cl, out / "clustering.src1")
    figure = out / "scatter.svg" if not args.no_figures else None
    if len(x) >= 3:
        proj = kernelcluster.pca2d(x)
        kernelcluster.export_scatter(proj, cl, labels, out / "scatter.csv", figure)
    with open(out / "assignments.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "cluster"])
        w.writerows(zip(labels, (int(a) for a in cl.assignments)))
    if not args.no_figures:
        from .plotting import plot_kernels

        reg = router.build_registry(cl)
        plot_kernels(reg.kernels, [f"cluster {i}" for i in range(cl.k)], out / "centers.svg")
    _write_run_json(out, args)
    print(f"k={cl.k} inertia={cl.inertia:.9g} iterations={cl.iterations_run}")
    return EXIT_OK


def cmd_route(args) -> int:
    manifest = corpus.load_manifest(args.manifest)
    clustering = kernelcluster.load_clustering(args.clustering)
    sr_cfg = srmodels.SrConfig(scale=args.scale, iterations=args.iterations, step=args.step)
    registry = router.build_registry(clustering, sr_cfg)
    out = args.out
    reports = router.batch_apply(manifest, registry, out, _est_config(args), jobs=args.jobs)
    router.write_reports(reports, out / "reports.jsonl")
    if not args.no_figures and len(registry):
        from .plotting import plot_kernels

        plot_kernels(registry.kernels, [f"cluster {i}" for i in range(len(registry))],
                     out / "registry.svg")
    _write_run_json(out, args)
    failed = [r for r in reports if r.error]
    for r in failed:
        log.warning("%s", r.error)
    print(f"routed {len(reports) - len(failed)}/{len(reports)} images")
    # the batch always completes; a failed image still makes the run unsuccessful
    return EXIT_USAGE if failed else EXIT_OK


def cmd_sr(args) -> int:
    lr = load_image(args.lr)
    if args.kernel is not None:
        cfg = srmodels.SrConfig(scale=args.scale, iterations=args.iterations, step=args.step)
        out = srmodels.sr_ibp(lr, degrade.check_kernel(_read_kernel(args.kernel)), cfg)
    else:
        out = srmodels.sr_bicubic(lr, args.scale)
    save_image(out, _out_file(args.out))
    _write_run_json(args.out.parent, args)
    return EXIT_OK


def _read_pairs(path: Path) -> list[tuple[str, Path, Path]]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ImageIOError(f"cannot read pairs file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["id", "test", "reference"]:
            raise UsageError(f"{path} line 1: header must be id,test,reference")
        pairs = []
        for row in reader:
            if not row:
                continue
            if len(row) != 3 or not all(v.strip() for v in row):
                raise UsageError(f"{path} line {reader.line_num}: expected id,test,reference")
            pid, test, ref = (v.strip() for v in row)
            pairs.append((pid, path.parent / test, path.parent / ref))
    return pairs


def _eval_pair(pair) -> metrics.MetricReport:
    pid, test, ref = pair
    return metrics.evaluate_pair(pid, load_image(test), load_image(ref))


def format_metric_csv(reports) -> str:
    lines = ["id,psnr_db,ssim"]
    for r in reports:
        p = "inf" if math.isinf(r.psnr_db) else f"{r.psnr_db:.6f}"
        lines.append(f"{r.id},{p},{r.ssim:.6f}")
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    pairs = _read_pairs(args.pairs)
    if args.jobs > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_eval_pair, pairs))
    else:
        reports = [_eval_pair(p) for p in pairs]
    text = format_metric_csv(reports)
    if args.out:
        _out_file(args.out).write_text(text)
        if not args.no_figures and reports:
            from .plotting import plot_metric_bars

            plot_metric_bars(reports, args.out.with_suffix(".svg"))
        _write_run_json(args.out.parent, args)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_votes(args) -> int:
    src = args.votes or corpus.study_votes_path()
    try:
        records = corpus.read_votes(src)
    except corpus.FormatError as exc:
        raise UsageError(f"{src}: {exc}") from exc
    table = corpus.aggregate_votes(records)
    text = corpus.format_vote_table(table)
    win = corpus.winners(table)
    totals = corpus.column_totals(table)
    summary = "".join(f"# winner {d}: {win[d]} ({totals[d]} votes cast)\n" for d in win)
    if args.out:
        _out_file(args.out).write_text(text)
        if not args.no_figures:
            from .plotting import plot_vote_table

            plot_vote_table(table, args.out.with_suffix(".svg"))
        _write_run_json(args.out.parent, args)
    sys.stdout.write(text + summary)
    return EXIT_OK


def cmd_synth_corpus(args) -> int:
    """Textured HR images, the 7 ground-truth kernels, LR images and manifests."""
    out = args.out
    for sub in ("hr", "lr", "train", "kernels"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    fam = synth.family_kernels(args.kernel_size)
    for i, k in enumerate(fam):
        degrade.save_kernel(k, out / "kernels" / f"member_{i}.srk")
    rng = np.random.default_rng(args.seed)
    labels = synth.corpus_labels(args.per_kernel)
    test_entries, train_entries, truth, pairs = [], [], [], []
    for n, (member, cat, eq) in enumerate(labels):
        img_id = f"k{member}_{n % args.per_kernel:02d}"
        hr = synth.textured_image(args.size, int(rng.integers(2**31)))
        lr = degrade.degrade(hr, fam[member], args.scale)
        save_image(hr, out / "hr" / f"{img_id}.pgm")
        save_image(lr, out / "lr" / f"{img_id}.pgm")
        group = corpus.domain_group_for(cat, eq)
        test_entries.append(corpus.ManifestEntry(img_id, f"lr/{img_id}.pgm", cat, eq, group))
        truth.append((img_id, member))
        pairs.append((img_id, f"route/{img_id}_sr.pgm", f"hr/{img_id}.pgm"))
    for member in range(len(fam)):
        for j in range(args.train_per_kernel):
            img_id = f"train_k{member}_{j:02d}"
            hr = synth.textured_image(args.size, int(rng.integers(2**31)))
            save_image(degrade.degrade(hr, fam[member], args.scale), out / "train" / f"{img_id}.pgm")
            train_entries.append(corpus.ManifestEntry(img_id, f"train/{img_id}.pgm", "Synthetic",
                                                      f"member {member}", "Other"))
    corpus.save_manifest(corpus.DatasetManifest(test_entries), out / "manifest.json")
    corpus.save_manifest(corpus.DatasetManifest(train_entries), out / "manifest_train.json")
    (out / "truth.csv").write_text("id,member\n" + "".join(f"{i},{m}\n" for i, m in truth))
    (out / "pairs.csv").write_text("id,test,reference\n" + "".join(f"{a},{b},{c}\n" for a, b, c in pairs))
    _write_run_json(out, args)
    print(f"wrote {len(test_entries)} test and {len(train_entries)} training images to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_est_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--kernel-size", type=int, default=kernelest.DEFAULT_KERNEL_SIZE)
    p.add_argument("--max-evals", type=int, default=400)
    p.add_argument("--patch-size", type=int, default=5)
    p.add_argument("--sample-patches", type=int, default=512)
    p.add_argument("--ridge", type=float, default=1e-8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelsr", description=__doc__.split("\n")[0])
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="blur + downsample (+ noise) an HR image")
    p.add_argument("hr", type=Path)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--kernel", type=Path, help="SRK1 kernel file")
    g.add_argument("--gaussian", type=float, nargs=3, metavar=("SIGMA1", "SIGMA2", "THETA"))
    p.add_argument("--kernel-size", type=int, default=kernelest.DEFAULT_KERNEL_SIZE)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--noise-dir", type=Path, help="noise bank directory")
    p.add_argument("--boundary", choices=degrade.BOUNDARIES, default="reflect")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("estimate-kernel", help="estimate a degradation kernel")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--blind", type=Path, nargs="+", metavar="LR")
    g.add_argument("--pair", type=Path, nargs=2, metavar=("HR", "LR"))
    _add_est_flags(p)
    p.add_argument("-o", "--out", type=Path, required=True,
                   help="kernel file, or a directory when several LR images are given")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("cluster", help="k-means over a directory of kernels")
    p.add_argument("kernel_dir", type=Path)
    p.add_argument("-k", type=int, default=7)
    p.add_argument("--sweep", metavar="LO..HI", help="also report silhouette scores over a k range")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("route", help="estimate, assign and restore every manifest image")
    p.add_argument("manifest", type=Path)
    p.add_argument("--clustering", type=Path, required=True)
    _add_est_flags(p)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("sr", help="super-resolve one image (IBP with --kernel, else bicubic)")
    p.add_argument("lr", type=Path)
    p.add_argument("--kernel", type=Path)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("eval", help="PSNR/SSIM over id,test,reference pairs")
    p.add_argument("--pairs", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-o", "--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("votes", help="aggregate user-study votes into a model x domain table")
    p.add_argument("votes", type=Path, nargs="?", help="votes CSV (default: shipped study tallies)")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("-o", "--out", type=Path)
    p.set_defaults(func=cmd_votes)

    p = sub.add_parser("synth-corpus", help="generate the synthetic evaluation corpus")
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--size", type=int, default=528, help="HR side length")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--kernel-size", type=int, default=kernelest.DEFAULT_KERNEL_SIZE)
    p.add_argument("--per-kernel", type=int, default=5)
    p.add_argument("--train-per-kernel", type=int, default=3)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"kernelsr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (KernelSRError, OSError, ValueError) as exc:
        print(f"kernelsr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
