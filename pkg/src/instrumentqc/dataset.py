"""Labeled-sample schema and dataset bookkeeping.

An :class:`AnnotationRecord` carries the raw annotator votes plus the
resolved labels; a :class:`DatasetManifest` is an immutable collection of
records with optional split assignments. Manifests serialize to JSON
lines, one record per line, with the split carried inline so a single
file round-trips the full state.

Vote resolution uses a strict-majority rule per field; ties leave the
record in ``needs_adjudication`` until a neutral reviewer decides.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .imaging import RasterImage, resize_bilinear

__all__ = [
    "InstrumentLabel",
    "DefectLabel",
    "RecordStatus",
    "Provenance",
    "AnnotationVote",
    "AnnotationRecord",
    "DatasetManifest",
    "ContingencyTable",
    "SplitName",
    "STANDARD_SIZE",
    "resolve_label",
    "standardize_image",
    "stratified_split",
    "defect_contingency",
]

STANDARD_SIZE = 1600


class InstrumentLabel(str, Enum):
    CARVER = "Carver"
    BANDAGE_SCISSORS = "Bandage Scissors"
    SCALPEL = "Scalpel"
    SCISSORS = "Scissors"
    DRESSING_FORCEPS = "Dressing Forceps"
    TV_FORCEPS = "TV Forceps"
    MCINDOE_FORCEPS = "McIndoe Forceps"
    EX_PROBE = "Ex-Probe"
    PROBE = "Probe"
    UTERINE_CURETTE = "Uterine Curette"
    NAIL_CLIPPER = "Nail Clipper"
    MISCELLANEOUS = "Miscellaneous"


class DefectLabel(str, Enum):
    CRACK = "Crack"
    CUTS = "Cuts"
    PORES = "Pores"
    SCRATCHES = "Scratches"
    CORROSION = "Corrosion"
    NO_DEFECT = "NoDefect"


class RecordStatus(str, Enum):
    RESOLVED = "resolved"
    NEEDS_ADJUDICATION = "needs_adjudication"


class SplitName(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class Provenance:
    """Where a record came from: captured, derived, generated, or adjudicated."""

    kind: str
    parent_id: Optional[str] = None
    transform_name: Optional[str] = None

    _KINDS = ("original", "augmented", "synthetic", "review_decision")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown provenance kind: {self.kind!r}")
        if self.kind == "augmented" and not (self.parent_id and self.transform_name):
            raise ValueError("augmented provenance requires parent_id and transform_name")

    @classmethod
    def original(cls) -> "Provenance":
        return cls("original")

    @classmethod
    def augmented(cls, parent_id: str, transform_name: str) -> "Provenance":
        return cls("augmented", parent_id=parent_id, transform_name=transform_name)

    @classmethod
    def synthetic(cls) -> "Provenance":
        return cls("synthetic")

    @classmethod
    def review_decision(cls) -> "Provenance":
        return cls("review_decision")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.parent_id is not None:
            out["parent_id"] = self.parent_id
        if self.transform_name is not None:
            out["transform_name"] = self.transform_name
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Provenance":
        return cls(
            data["kind"],
            parent_id=data.get("parent_id"),
            transform_name=data.get("transform_name"),
        )


@dataclass(frozen=True)
class AnnotationVote:
    annotator_id: str
    instrument: InstrumentLabel
    defect: DefectLabel

    def __post_init__(self) -> None:
        if not self.annotator_id:
            raise ValueError("annotator_id must be non-empty")


def resolve_label(
    votes: Sequence[AnnotationVote],
) -> tuple[Optional[InstrumentLabel], Optional[DefectLabel], RecordStatus]:
    """Strict-majority resolution, each field independently.

    A label wins only with more than half of the votes; otherwise the
    field stays unresolved and the record needs adjudication by a
    neutral reviewer.
    """
    if not votes:
        raise ValueError("cannot resolve an empty vote list")
    instrument = _strict_majority([v.instrument for v in votes])
    defect = _strict_majority([v.defect for v in votes])
    status = (
        RecordStatus.RESOLVED
        if instrument is not None and defect is not None
        else RecordStatus.NEEDS_ADJUDICATION
    )
    return instrument, defect, status


def _strict_majority(labels):
    top, count = Counter(labels).most_common(1)[0]
    return top if count * 2 > len(labels) else None


@dataclass(frozen=True)
class AnnotationRecord:
    """One labeled sample: votes, resolved labels, and provenance."""

    record_id: str
    image_path: str
    votes: tuple[AnnotationVote, ...] = ()
    resolved_instrument: Optional[InstrumentLabel] = None
    resolved_defect: Optional[DefectLabel] = None
    status: RecordStatus = RecordStatus.NEEDS_ADJUDICATION
    provenance: Provenance = field(default_factory=Provenance.original)

    def __post_init__(self) -> None:
        if not self.record_id:
            raise ValueError("record_id must be non-empty")
        object.__setattr__(self, "votes", tuple(self.votes))
        both = self.resolved_instrument is not None and self.resolved_defect is not None
        if (self.status is RecordStatus.RESOLVED) != both:
            raise ValueError("status must be resolved exactly when both labels are present")
        if (
            self.resolved_instrument is InstrumentLabel.MISCELLANEOUS
            and self.resolved_defect not in (None, DefectLabel.NO_DEFECT)
        ):
            raise ValueError("Miscellaneous records cannot carry a defect label")

    @classmethod
    def from_votes(
        cls,
        record_id: str,
        image_path: str,
        votes: Sequence[AnnotationVote],
        provenance: Optional[Provenance] = None,
    ) -> "AnnotationRecord":
        instrument, defect, status = resolve_label(votes)
        return cls(
            record_id=record_id,
            image_path=image_path,
            votes=tuple(votes),
            resolved_instrument=instrument if status is RecordStatus.RESOLVED else None,
            resolved_defect=defect if status is RecordStatus.RESOLVED else None,
            status=status,
            provenance=provenance or Provenance.original(),
        )

    @property
    def is_resolved(self) -> bool:
        return self.status is RecordStatus.RESOLVED

    def to_dict(self, split: Optional[str] = None) -> dict:
        return {
            "record_id": self.record_id,
            "image_path": self.image_path,
            "votes": [
                {
                    "annotator_id": v.annotator_id,
                    "instrument": v.instrument.value,
                    "defect": v.defect.value,
                }
                for v in self.votes
            ],
            "resolved_instrument": (
                self.resolved_instrument.value if self.resolved_instrument else None
            ),
            "resolved_defect": self.resolved_defect.value if self.resolved_defect else None,
            "status": self.status.value,
            "provenance": self.provenance.to_dict(),
            "split": split,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnnotationRecord":
        return cls(
            record_id=data["record_id"],
            image_path=data["image_path"],
            votes=tuple(
                AnnotationVote(
                    v["annotator_id"],
                    InstrumentLabel(v["instrument"]),
                    DefectLabel(v["defect"]),
                )
                for v in data.get("votes", [])
            ),
            resolved_instrument=(
                InstrumentLabel(data["resolved_instrument"])
                if data.get("resolved_instrument")
                else None
            ),
            resolved_defect=(
                DefectLabel(data["resolved_defect"]) if data.get("resolved_defect") else None
            ),
            status=RecordStatus(data["status"]),
            provenance=Provenance.from_dict(data["provenance"]),
        )


@dataclass(frozen=True)
class DatasetManifest:
    """Immutable record collection with optional train/val/test assignments."""

    records: tuple[AnnotationRecord, ...]
    split_assignments: Optional[dict[str, SplitName]] = None

    def __post_init__(self) -> None:
        records = tuple(self.records)
        ids = [r.record_id for r in records]
        if len(set(ids)) != len(ids):
            dupes = [i for i, n in Counter(ids).items() if n > 1]
            raise ValueError(f"duplicate record ids: {dupes[:5]}")
        id_set = set(ids)
        for r in records:
            if r.provenance.kind == "augmented" and r.provenance.parent_id not in id_set:
                raise ValueError(
                    f"augmented record {r.record_id} references missing parent "
                    f"{r.provenance.parent_id}"
                )
        object.__setattr__(self, "records", records)
        if self.split_assignments is not None:
            unknown = set(self.split_assignments) - id_set
            if unknown:
                raise ValueError(f"split assignments for unknown records: {sorted(unknown)[:5]}")
            object.__setattr__(self, "split_assignments", dict(self.split_assignments))

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, record_id: str) -> AnnotationRecord:
        for r in self.records:
            if r.record_id == record_id:
                return r
        raise KeyError(record_id)

    def split_of(self, record_id: str) -> Optional[SplitName]:
        if self.split_assignments is None:
            return None
        return self.split_assignments.get(record_id)

    def records_in_split(self, split: SplitName) -> list[AnnotationRecord]:
        if self.split_assignments is None:
            return []
        return [r for r in self.records if self.split_assignments.get(r.record_id) == split]

    def with_records(self, extra: Iterable[AnnotationRecord]) -> "DatasetManifest":
        return DatasetManifest(self.records + tuple(extra), self.split_assignments)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                split = self.split_of(record.record_id)
                fh.write(
                    json.dumps(record.to_dict(split.value if split else None), sort_keys=True)
                )
                fh.write("\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "DatasetManifest":
        records: list[AnnotationRecord] = []
        splits: dict[str, SplitName] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                records.append(AnnotationRecord.from_dict(data))
                if data.get("split"):
                    splits[data["record_id"]] = SplitName(data["split"])
        return cls(tuple(records), splits or None)


def standardize_image(img: RasterImage) -> RasterImage:
    """Resize to the 1600x1600 dataset standard; identity when already there."""
    if img.width == STANDARD_SIZE and img.height == STANDARD_SIZE:
        return img
    return resize_bilinear(img, STANDARD_SIZE, STANDARD_SIZE)


def stratified_split(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetManifest:
    """Assign train/val/test per (instrument, defect) stratum.

    Within each stratum records are shuffled by a seeded generator and
    given floor-proportional counts; leftover records go to train.
    Augmented records are not split independently: they inherit their
    parent's assignment so no derived image leaks across splits.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    unresolved = [r.record_id for r in manifest.records if not r.is_resolved]
    if unresolved:
        raise ValueError(f"cannot split with unresolved records: {unresolved[:5]}")

    strata: dict[tuple[str, str], list[AnnotationRecord]] = defaultdict(list)
    for record in manifest.records:
        if record.provenance.kind == "augmented":
            continue
        key = (record.resolved_instrument.value, record.resolved_defect.value)
        strata[key].append(record)

    rng = np.random.default_rng(seed)
    assignments: dict[str, SplitName] = {}
    for key in sorted(strata):
        members = sorted(strata[key], key=lambda r: r.record_id)
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        k = len(shuffled)
        n_val = int(np.floor(ratios[1] * k))
        n_test = int(np.floor(ratios[2] * k))
        n_train = k - n_val - n_test  # floor(train ratio * k) plus the remainder
        for record in shuffled[:n_train]:
            assignments[record.record_id] = SplitName.TRAIN
        for record in shuffled[n_train : n_train + n_val]:
            assignments[record.record_id] = SplitName.VAL
        for record in shuffled[n_train + n_val :]:
            assignments[record.record_id] = SplitName.TEST

    for record in manifest.records:
        if record.provenance.kind == "augmented":
            assignments[record.record_id] = assignments[record.provenance.parent_id]

    return DatasetManifest(manifest.records, assignments)


@dataclass(frozen=True)
class ContingencyTable:
    """Instrument-by-defect count matrix for categorical testing."""

    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError(
                f"counts shape {counts.shape} does not match labels "
                f"({len(self.row_labels)}x{len(self.col_labels)})"
            )
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def defect_contingency(manifest: DatasetManifest) -> ContingencyTable:
    """Count resolved defective records per (instrument, defect) pair.

    NoDefect records and Miscellaneous instruments are excluded; raises
    when the manifest holds no defective records at all.
    """
    counts: Counter[tuple[InstrumentLabel, DefectLabel]] = Counter()
    for record in manifest.records:
        if not record.is_resolved:
            continue
        if record.resolved_defect is DefectLabel.NO_DEFECT:
            continue
        if record.resolved_instrument is InstrumentLabel.MISCELLANEOUS:
            continue
        counts[(record.resolved_instrument, record.resolved_defect)] += 1
    if not counts:
        raise ValueError("manifest contains no resolved defective records")

    instruments = [i for i in InstrumentLabel if any(k[0] is i for k in counts)]
    defects = [d for d in DefectLabel if any(k[1] is d for k in counts)]
    matrix = np.zeros((len(instruments), len(defects)), dtype=np.int64)
    for (instrument, defect), value in counts.items():
        matrix[instruments.index(instrument), defects.index(defect)] = value
    return ContingencyTable(
        tuple(i.value for i in instruments),
        tuple(d.value for d in defects),
        matrix,
    )
