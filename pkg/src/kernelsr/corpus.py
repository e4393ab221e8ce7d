"""Dataset manifests and user-study vote aggregation.

Manifest JSON::

    {"entries": [{"id": ..., "path": ..., "source_category": ...,
                  "equipment": ..., "domain_group": ...}, ...]}

Votes CSV header: ``respondent_id,image_id,domain_group,chosen_model``.
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .errors import FormatError, ImageIOError

DOMAIN_GROUPS = ("Smartphone", "GoogleStreetView", "Other")
MODELS = ("RealSR", "USRNet", "ESRGAN", "EnhanceNet", "DPSR")

VOTE_FIELDS = ("respondent_id", "image_id", "domain_group", "chosen_model")
MANIFEST_FIELDS = ("id", "path", "source_category", "equipment", "domain_group")

# User-study tallies: model -> (Smartphone, GoogleStreetView, Other)
STUDY_COUNTS = {
    "RealSR": (21, 7, 537),
    "USRNet": (5, 9, 120),
    "ESRGAN": (0, 3, 12),
    "EnhanceNet": (0, 1, 6),
    "DPSR": (4, 10, 315),
}

# Kernel cluster -> [(source category, [equipment names])] for the published
# 7-cluster grouping of real-world kernels.
KERNEL_CLUSTER_SOURCES = {
    0: [
        ("Mobile Phone", ["iPhone 6", "iPhone 11", "LG", "Huawei", "Samsung S3 Mini"]),
        ("Satellite camera", ["Satellite"]),
        ("Camera", ["Kodak"]),
        ("Microscope", ["Malaria"]),
        ("Car camera", ["LYFT-overhead"]),
        ("Tablet camera", ["Galaxy Tab", "iPad2"]),
        ("Facebook compression", ["ipad2_fb"]),
        ("Whatsapp compression", ["samsungs3mini_whatsapp"]),
        ("Drone camera", ["Drone"]),
    ],
    1: [
        ("Camera", ["Nikon", "Kodak", "Canon", "Kinect"]),
        ("Laptop webcam", ["Lenovo_webcam"]),
        ("Google Maps", ["Google Street View"]),
        ("Webcam", ["webcam"]),
    ],
    2: [
        ("TV Broadcast", ["BBC Pose"]),
        ("Whatsapp compression", ["iPad 2_wa"]),
        ("Mobile Phone", ["iPhone3", "iPhone 5c"]),
    ],
    3: [("Mobile Phone", ["Blackberry", "Microsoft Lumia"])],
    4: [("CCTV", ["indoor_cam"])],
    5: [("Facebook compression", ["Samsungs3mini_facebook"])],
    6: [("FLIR Camera", ["KITTI"])],
}


def cluster_equipment(cluster: int) -> list[tuple[str, str]]:
    """Flattened (source_category, equipment) pairs of one kernel cluster."""
    return [(cat, name) for cat, names in KERNEL_CLUSTER_SOURCES[cluster] for name in names]


def domain_group_for(source_category: str, equipment: str) -> str:
    if source_category == "Mobile Phone":
        return "Smartphone"
    if equipment == "Google Street View":
        return "GoogleStreetView"
    return "Other"


# --------------------------------------------------------------------------
# manifests
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    source_category: str = ""
    equipment: str = ""
    domain_group: str = "Other"


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    base_dir: Path | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        """Entry path, taken relative to the manifest file when not absolute."""
        p = Path(entry.path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p


def validate_entries(entries: list[ManifestEntry]) -> None:
    seen = set()
    for e in entries:
        if e.id in seen:
            raise FormatError(f"duplicate manifest id {e.id!r}")
        seen.add(e.id)
        if e.domain_group not in DOMAIN_GROUPS:
            raise FormatError(f"entry {e.id!r}: unknown domain_group {e.domain_group!r}")


def parse_manifest(doc) -> list[ManifestEntry]:
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise FormatError("manifest must be an object with an 'entries' list")
    entries = []
    for i, raw in enumerate(doc["entries"]):
        if not isinstance(raw, dict):
            raise FormatError(f"manifest entry {i} is not an object")
        missing = [f for f in MANIFEST_FIELDS if f not in raw]
        if missing:
            raise FormatError(f"manifest entry {i} missing field(s): {', '.join(missing)}")
        entries.append(ManifestEntry(**{f: str(raw[f]) for f in MANIFEST_FIELDS}))
    validate_entries(entries)
    return entries


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ImageIOError(f"cannot read manifest {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON: {exc}") from exc
    return DatasetManifest(parse_manifest(doc), base_dir=path.parent)


def manifest_to_json(manifest: DatasetManifest) -> str:
    doc = {"entries": [asdict(e) for e in manifest.entries]}
    return json.dumps(doc, indent=2) + "\n"


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    validate_entries(manifest.entries)
    Path(path).write_text(manifest_to_json(manifest))


# --------------------------------------------------------------------------
# votes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VoteRecord:
    respondent_id: str
    image_id: str
    domain_group: str
    chosen_model: str

    def __post_init__(self):
        if not self.chosen_model:
            raise FormatError("vote record has an empty chosen_model")


@dataclass
class VoteTable:
    """``counts[model][domain_group]``; absent cells are zero."""

    counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def get(self, model: str, domain: str) -> int:
        return self.counts.get(model, {}).get(domain, 0)

    def models(self) -> list[str]:
        """Row order: the five studied models first, then any others sorted."""
        known = [m for m in MODELS if m in self.counts]
        return known + sorted(m for m in self.counts if m not in MODELS)

    def domains(self) -> list[str]:
        present = {d for row in self.counts.values() for d in row}
        return [d for d in DOMAIN_GROUPS if d in present] + sorted(present - set(DOMAIN_GROUPS))


def aggregate_votes(records) -> VoteTable:
    tally = Counter((r.chosen_model, r.domain_group) for r in records)
    table = VoteTable()
    for (model, domain), n in sorted(tally.items()):
        table.counts.setdefault(model, {})[domain] = n
    return table


def column_totals(table: VoteTable) -> dict[str, int]:
    totals: dict[str, int] = {}
    for row in table.counts.values():
        for domain, n in row.items():
            totals[domain] = totals.get(domain, 0) + n
    return {d: totals[d] for d in table.domains() if d in totals}


def winners(table: VoteTable) -> dict[str, str]:
    """Most-voted model per domain; ties go to the lexicographically smaller name."""
    out = {}
    for domain in table.domains():
        best = None
        for model in sorted(table.counts):
            n = table.get(model, domain)
            if n > 0 and (best is None or n > best[1]):
                best = (model, n)
        if best is not None:
            out[domain] = best[0]
    return out


def read_votes(source) -> list[VoteRecord]:
    """Parse a votes CSV from a path or an open text stream.

    Raises :class:`FormatError` naming the offending line number.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, newline="") as fh:
                return read_votes(fh)
        except OSError as exc:
            raise ImageIOError(f"cannot read votes {source}: {exc}") from exc
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != VOTE_FIELDS:
        raise FormatError(f"line 1: votes header must be {','.join(VOTE_FIELDS)}")
    records = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(VOTE_FIELDS):
            raise FormatError(f"line {line}: expected {len(VOTE_FIELDS)} fields, got {len(row)}")
        respondent, image, domain, model = (v.strip() for v in row)
        if domain not in DOMAIN_GROUPS:
            raise FormatError(f"line {line}: unknown domain_group {domain!r}")
        if not model:
            raise FormatError(f"line {line}: empty chosen_model")
        records.append(VoteRecord(respondent, image, domain, model))
    return records


def write_votes(records, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(VOTE_FIELDS)
    for r in records:
        w.writerow([r.respondent_id, r.image_id, r.domain_group, r.chosen_model])


def format_vote_table(table: VoteTable, mark_winners: bool = True) -> str:
    """Model x domain CSV: one row per model, one column per domain group.

    Winning cells carry a trailing ``*`` when ``mark_winners`` is set.
    """
    win = winners(table) if mark_winners else {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", *DOMAIN_GROUPS])
    for model in table.models():
        cells = []
        for d in DOMAIN_GROUPS:
            n = table.get(model, d)
            cells.append(f"{n}*" if win.get(d) == model else str(n))
        w.writerow([model, *cells])
    return buf.getvalue()


def parse_vote_table(text: str) -> VoteTable:
    """Inverse of :func:`format_vote_table` (winner markers are dropped)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "model":
        raise FormatError("vote table must start with a 'model' header")
    domains = rows[0][1:]
    table = VoteTable()
    for row in rows[1:]:
        if not row:
            continue
        for d, cell in zip(domains, row[1:]):
            n = int(cell.rstrip("*"))
            if n:
                table.counts.setdefault(row[0], {})[d] = n
        table.counts.setdefault(row[0], {})
    return table


def study_votes_path() -> Path:
    """Location of the shipped votes CSV reconstructing the user-study tallies."""
    return Path(str(resources.files("kernelsr") / "data" / "study_votes.csv"))


def reconstruct_study_votes(respondents: int = 30) -> list[VoteRecord]:
    """Individual votes consistent with the published per-domain tallies.

    Each respondent votes once per surveyed image, so a domain with ``T``
    total votes spans ``T / respondents`` images. Votes are dealt to
    (image, respondent) slots in model order.
    """
    records = []
    for di, domain in enumerate(DOMAIN_GROUPS):
        ballot = [m for m in MODELS for _ in range(STUDY_COUNTS[m][di])]
        n_images = len(ballot) // respondents
        prefix = {"Smartphone": "smartphone", "GoogleStreetView": "streetview", "Other": "other"}[domain]
        for i, model in enumerate(ballot):
            image, resp = divmod(i, respondents)
            records.append(VoteRecord(f"r{resp + 1:02d}", f"{prefix}_{image + 1:02d}" if n_images > 1 else prefix,
                                      domain, model))
    return records
