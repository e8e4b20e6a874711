"""Two-stage scan pipeline: preprocess, classify instrument, classify defect.

Confidence routing at the (inclusive) 50% threshold:

* instrument stage: top label at or above the threshold is accepted;
  below it the scan is flagged for manual review; a confidently
  predicted Miscellaneous means no instrument is present at all;
* defect stage: any label at or above the threshold is accepted
  (including a confident NoDefect); a low-confidence defect label falls
  back to "no defect detected"; a low-confidence NoDefect is flagged,
  since an uncertain all-clear deserves human eyes.

The defect stage only runs when the instrument stage accepted a label,
because the registry is keyed by instrument.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .dataset import DefectLabel, InstrumentLabel
from .imaging import NormalizedTensor, RasterImage, normalize, resize_bilinear, unsharp_mask
from .model import ClassifierBackend

__all__ = [
    "DispositionKind",
    "Disposition",
    "PreprocessSettings",
    "PipelineConfig",
    "ScanResult",
    "preprocess",
    "classify_instrument",
    "classify_defect",
    "run_scan",
]


class DispositionKind(str, Enum):
    ACCEPTED = "accepted"
    FLAGGED_FOR_REVIEW = "flagged_for_review"
    NO_INSTRUMENT_DETECTED = "no_instrument_detected"
    NO_DEFECT_DETECTED = "no_defect_detected"


@dataclass(frozen=True)
class Disposition:
    """Categorical verdict of one pipeline stage."""

    kind: DispositionKind
    label: Optional[str] = None
    confidence: Optional[float] = None

    @classmethod
    def accepted(cls, label: str, confidence: float) -> "Disposition":
        return cls(DispositionKind.ACCEPTED, label, confidence)

    @classmethod
    def flagged(cls, top_label: str, confidence: float) -> "Disposition":
        return cls(DispositionKind.FLAGGED_FOR_REVIEW, top_label, confidence)

    @classmethod
    def no_instrument(cls, confidence: Optional[float] = None) -> "Disposition":
        return cls(DispositionKind.NO_INSTRUMENT_DETECTED, None, confidence)

    @classmethod
    def no_defect(cls, top_label: Optional[str] = None,
                  confidence: Optional[float] = None) -> "Disposition":
        return cls(DispositionKind.NO_DEFECT_DETECTED, top_label, confidence)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "label": self.label, "confidence": self.confidence}

    @classmethod
    def from_dict(cls, data: dict) -> "Disposition":
        return cls(DispositionKind(data["kind"]), data.get("label"), data.get("confidence"))


@dataclass(frozen=True)
class PreprocessSettings:
    unsharp_sigma: float = 1.0
    unsharp_amount: float = 1.0
    target_size: int = 1024

    def __post_init__(self) -> None:
        if self.unsharp_sigma <= 0 or self.target_size < 1:
            raise ValueError("sigma must be positive and target size at least 1")


@dataclass
class PipelineConfig:
    """Backends plus routing parameters for one deployment."""

    instrument_backend: ClassifierBackend
    defect_registry: dict[str, ClassifierBackend]
    confidence_threshold: float = 0.50
    preprocess: PreprocessSettings = field(default_factory=PreprocessSettings)

    def __post_init__(self) -> None:
        if not 0.0 < self.confidence_threshold < 1.0:
            raise ValueError(
                f"confidence threshold must lie in (0, 1), got {self.confidence_threshold}"
            )
        missing = [
            label
            for label in self.instrument_backend.labels
            if label != InstrumentLabel.MISCELLANEOUS.value and label not in self.defect_registry
        ]
        if missing:
            raise ValueError(f"instrument labels without a defect backend: {missing}")


def preprocess(img: RasterImage, config: PipelineConfig) -> NormalizedTensor:
    """Unsharp mask, then resize to the model input size, then scale to [0,1]."""
    settings = config.preprocess
    sharpened = unsharp_mask(img, settings.unsharp_sigma, settings.unsharp_amount)
    resized = resize_bilinear(sharpened, settings.target_size, settings.target_size)
    return normalize(resized)


def classify_instrument(tensor: NormalizedTensor, config: PipelineConfig) -> Disposition:
    top_label, confidence = config.instrument_backend.predict(tensor).top()
    if confidence >= config.confidence_threshold:
        if top_label == InstrumentLabel.MISCELLANEOUS.value:
            return Disposition.no_instrument(confidence)
        return Disposition.accepted(top_label, confidence)
    return Disposition.flagged(top_label, confidence)


def classify_defect(
    tensor: NormalizedTensor, instrument: str, config: PipelineConfig
) -> Disposition:
    backend = config.defect_registry.get(instrument)
    if backend is None:
        raise KeyError(f"no defect backend registered for instrument {instrument!r}")
    top_label, confidence = backend.predict(tensor).top()
    if confidence >= config.confidence_threshold:
        return Disposition.accepted(top_label, confidence)
    if top_label == DefectLabel.NO_DEFECT.value:
        # uncertain all-clear: route to a human instead of shipping it
        return Disposition.flagged(top_label, confidence)
    return Disposition.no_defect(top_label, confidence)


@dataclass(frozen=True)
class ScanResult:
    """Full outcome of one scan, including failures, for auditability."""

    scan_id: str
    instrument: Optional[Disposition]
    defect: Optional[Disposition]
    preprocess_ms: float
    instrument_ms: Optional[float]
    defect_ms: Optional[float]
    timestamp: float
    error: Optional[str] = None

    def __post_init__(self) -> None:
        instrument_accepted = (
            self.instrument is not None and self.instrument.kind is DispositionKind.ACCEPTED
        )
        if self.defect is not None and not instrument_accepted:
            raise ValueError("defect disposition requires an accepted instrument")

    @property
    def needs_review(self) -> bool:
        return any(
            d is not None and d.kind is DispositionKind.FLAGGED_FOR_REVIEW
            for d in (self.instrument, self.defect)
        )

    def to_dict(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "instrument": self.instrument.to_dict() if self.instrument else None,
            "defect": self.defect.to_dict() if self.defect else None,
            "preprocess_ms": self.preprocess_ms,
            "instrument_ms": self.instrument_ms,
            "defect_ms": self.defect_ms,
            "timestamp": self.timestamp,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScanResult":
        return cls(
            scan_id=data["scan_id"],
            instrument=Disposition.from_dict(data["instrument"]) if data.get("instrument") else None,
            defect=Disposition.from_dict(data["defect"]) if data.get("defect") else None,
            preprocess_ms=data["preprocess_ms"],
            instrument_ms=data.get("instrument_ms"),
            defect_ms=data.get("defect_ms"),
            timestamp=data["timestamp"],
            error=data.get("error"),
        )


def run_scan(img: RasterImage, config: PipelineConfig) -> ScanResult:
    """Preprocess once, run both stages, and time each step.

    Backend failures do not raise: they come back as a result with the
    error recorded, so callers can persist an audit trail.
    """
    scan_id = str(uuid.uuid4())
    timestamp = time.time()

    start = time.perf_counter()
    tensor = preprocess(img, config)
    preprocess_ms = (time.perf_counter() - start) * 1000.0

    instrument: Optional[Disposition] = None
    defect: Optional[Disposition] = None
    instrument_ms: Optional[float] = None
    defect_ms: Optional[float] = None
    error: Optional[str] = None
    try:
        start = time.perf_counter()
        instrument = classify_instrument(tensor, config)
        instrument_ms = (time.perf_counter() - start) * 1000.0
        if instrument.kind is DispositionKind.ACCEPTED:
            start = time.perf_counter()
            defect = classify_defect(tensor, instrument.label, config)
            defect_ms = (time.perf_counter() - start) * 1000.0
    except Exception as exc:  # audit-trail failure record, never a crash
        error = f"{type(exc).__name__}: {exc}"
        defect = None

    return ScanResult(
        scan_id=scan_id,
        instrument=instrument,
        defect=defect,
        preprocess_ms=preprocess_ms,
        instrument_ms=instrument_ms,
        defect_ms=defect_ms,
        timestamp=timestamp,
        error=error,
    )
