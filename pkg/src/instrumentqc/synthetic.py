"""Procedural corpus generator for desk-scale verification.

Real instrument photographs are not shipped with the toolkit, so tests
and demos run on drawn stand-ins: each instrument label gets a distinct
silhouette (bars, rings, and accents in label-specific positions) and
each defect label a distinct overlaid motif:

* Scratches - thin bright lines across the body
* Crack     - a dark jagged polyline
* Pores     - a cluster of small dark dots
* Cuts      - a notch carved out of the silhouette edge
* Corrosion - a mottled brownish patch

Geometry is jittered per record by a generator seeded from
(seed, instrument, defect, index), so a corpus is byte-identical for a
fixed seed no matter the iteration order.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .dataset import (
    AnnotationRecord,
    AnnotationVote,
    DatasetManifest,
    DefectLabel,
    InstrumentLabel,
    Provenance,
    RecordStatus,
)
from .imaging import RasterImage, save_png

__all__ = ["generate_synthetic_corpus", "draw_sample"]

_ANNOTATORS = ("synth-annotator-1", "synth-annotator-2", "synth-annotator-3")

# per-instrument geometry: main bar angle (degrees), accent kind, accent corner
_INSTRUMENT_GEOMETRY: dict[InstrumentLabel, tuple[float, str, int]] = {
    InstrumentLabel.CARVER: (15.0, "wedge", 0),
    InstrumentLabel.BANDAGE_SCISSORS: (40.0, "two_rings", 1),
    InstrumentLabel.SCALPEL: (0.0, "wedge", 2),
    InstrumentLabel.SCISSORS: (65.0, "cross", 3),
    InstrumentLabel.DRESSING_FORCEPS: (90.0, "vee", 0),
    InstrumentLabel.TV_FORCEPS: (115.0, "ring", 1),
    InstrumentLabel.MCINDOE_FORCEPS: (140.0, "vee", 2),
    InstrumentLabel.EX_PROBE: (30.0, "bulb", 3),
    InstrumentLabel.PROBE: (75.0, "none", 0),
    InstrumentLabel.UTERINE_CURETTE: (105.0, "ring", 2),
    InstrumentLabel.NAIL_CLIPPER: (155.0, "double_bar", 1),
    InstrumentLabel.MISCELLANEOUS: (0.0, "blob", 0),
}

_CORNERS = ((0.22, 0.22), (0.22, 0.78), (0.78, 0.22), (0.78, 0.78))


def _segment_mask(shape, x0, y0, x1, y1, thickness):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    px = xx - x0
    py = yy - y0
    dx = x1 - x0
    dy = y1 - y0
    length_sq = dx * dx + dy * dy
    t = np.clip((px * dx + py * dy) / max(length_sq, 1e-9), 0.0, 1.0)
    dist = np.hypot(px - t * dx, py - t * dy)
    return dist <= thickness


def _disk_mask(shape, cx, cy, r):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _ring_mask(shape, cx, cy, r, thickness):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    dist = np.hypot(xx - cx, yy - cy)
    return np.abs(dist - r) <= thickness


def _paint(canvas, mask, color):
    for ch in range(3):
        canvas[:, :, ch][mask] = color[ch]


def _draw_silhouette(canvas, instrument: InstrumentLabel, rng) -> np.ndarray:
    """Paint the instrument body; returns the body mask for motif placement."""
    size = canvas.shape[0]
    angle_deg, accent, corner = _INSTRUMENT_GEOMETRY[instrument]
    angle = math.radians(angle_deg + rng.uniform(-2.5, 2.5))
    cx = size * (0.5 + rng.uniform(-0.03, 0.03))
    cy = size * (0.5 + rng.uniform(-0.03, 0.03))
    half = size * 0.36
    x0, y0 = cx - half * math.cos(angle), cy - half * math.sin(angle)
    x1, y1 = cx + half * math.cos(angle), cy + half * math.sin(angle)
    thickness = size * 0.045 * (1 + rng.uniform(-0.05, 0.05))
    body = _segment_mask(canvas.shape, x0, y0, x1, y1, thickness)

    ax = size * (_CORNERS[corner][0] + rng.uniform(-0.02, 0.02))
    ay = size * (_CORNERS[corner][1] + rng.uniform(-0.02, 0.02))
    r = size * 0.10
    if accent == "ring":
        body |= _ring_mask(canvas.shape, ax, ay, r, size * 0.02)
    elif accent == "two_rings":
        body |= _ring_mask(canvas.shape, ax - r, ay, r * 0.7, size * 0.02)
        body |= _ring_mask(canvas.shape, ax + r, ay, r * 0.7, size * 0.02)
    elif accent == "bulb":
        body |= _disk_mask(canvas.shape, ax, ay, r * 0.6)
    elif accent == "wedge":
        body |= _segment_mask(canvas.shape, ax, ay, ax + r, ay + r, size * 0.03)
        body |= _segment_mask(canvas.shape, ax, ay, ax + r, ay - r, size * 0.03)
    elif accent == "cross":
        body |= _segment_mask(canvas.shape, ax - r, ay - r, ax + r, ay + r, size * 0.02)
        body |= _segment_mask(canvas.shape, ax - r, ay + r, ax + r, ay - r, size * 0.02)
    elif accent == "vee":
        body |= _segment_mask(canvas.shape, ax - r, ay - r, ax, ay + r, size * 0.02)
        body |= _segment_mask(canvas.shape, ax + r, ay - r, ax, ay + r, size * 0.02)
    elif accent == "double_bar":
        body |= _segment_mask(canvas.shape, ax - r, ay - r * 0.5, ax + r, ay - r * 0.5, size * 0.025)
        body |= _segment_mask(canvas.shape, ax - r, ay + r * 0.5, ax + r, ay + r * 0.5, size * 0.025)
    elif accent == "blob":
        for _ in range(4):
            bx = size * rng.uniform(0.2, 0.8)
            by = size * rng.uniform(0.2, 0.8)
            body |= _disk_mask(canvas.shape, bx, by, size * rng.uniform(0.04, 0.1))

    steel = 170 + rng.uniform(-5, 5)
    _paint(canvas, body, (steel, steel, steel + 6))
    return body


def _body_anchor(body: np.ndarray, rng) -> tuple[float, float]:
    """A random body pixel, preferring the central region so motifs stay in frame."""
    size = body.shape[0]
    ys, xs = np.nonzero(body)
    if len(ys) == 0:
        return body.shape[1] / 2, body.shape[0] / 2
    central = (ys > 0.2 * size) & (ys < 0.8 * size) & (xs > 0.2 * size) & (xs < 0.8 * size)
    if central.any():
        ys, xs = ys[central], xs[central]
    pick = rng.integers(0, len(ys))
    return float(xs[pick]), float(ys[pick])


def _draw_defect(canvas, body, defect: DefectLabel, rng) -> None:
    # each motif carries a distinct chroma so defects stay separable even
    # under the neutral-gray jitter of the instrument body
    size = canvas.shape[0]
    if defect is DefectLabel.NO_DEFECT:
        return
    ax, ay = _body_anchor(body, rng)

    def clamp(v):
        return min(max(v, 0.08 * size), 0.92 * size)

    if defect is DefectLabel.SCRATCHES:
        for _ in range(3):
            angle = rng.uniform(0, math.pi)
            length = size * rng.uniform(0.20, 0.34)
            x1 = clamp(ax + length * math.cos(angle))
            y1 = clamp(ay + length * math.sin(angle))
            mask = _segment_mask(canvas.shape, ax, ay, x1, y1, max(size * 0.02, 1.4))
            _paint(canvas, mask, (255, 250, 215))
            ax, ay = _body_anchor(body, rng)
    elif defect is DefectLabel.CRACK:
        x, y = ax, ay
        down = 1.0 if y < size * 0.5 else -1.0  # wander toward the canvas center
        for _ in range(6):
            nx = clamp(x + size * rng.uniform(-0.14, 0.14))
            ny = clamp(y + down * size * rng.uniform(0.04, 0.12))
            mask = _segment_mask(canvas.shape, x, y, nx, ny, max(size * 0.018, 1.4))
            _paint(canvas, mask, (150, 18, 18))
            x, y = nx, ny
    elif defect is DefectLabel.PORES:
        for _ in range(int(rng.integers(14, 21))):
            px = clamp(ax + size * rng.uniform(-0.14, 0.14))
            py = clamp(ay + size * rng.uniform(-0.14, 0.14))
            mask = _disk_mask(canvas.shape, px, py, max(size * 0.024, 1.6))
            _paint(canvas, mask, (18, 30, 150))
    elif defect is DefectLabel.CUTS:
        angle = rng.uniform(0, 2 * math.pi)
        depth = size * rng.uniform(0.10, 0.16)
        mask = _segment_mask(
            canvas.shape, ax, ay,
            ax + depth * math.cos(angle), ay + depth * math.sin(angle),
            max(size * 0.04, 1.6),
        )
        _paint(canvas, mask, (18, 130, 30))
    elif defect is DefectLabel.CORROSION:
        patch = _disk_mask(canvas.shape, ax, ay, size * rng.uniform(0.10, 0.14))
        speckle = rng.random(canvas.shape[:2]) < 0.55
        mottled = patch & speckle
        _paint(canvas, mottled, (165 + rng.uniform(-8, 8), 95, 30))


def draw_sample(
    instrument: InstrumentLabel,
    defect: DefectLabel,
    image_size: int,
    rng: np.random.Generator,
) -> RasterImage:
    """One synthetic photo: noisy dark background, silhouette, defect motif."""
    canvas = np.empty((image_size, image_size, 3), dtype=np.float64)
    canvas[:, :, 0] = 28
    canvas[:, :, 1] = 30
    canvas[:, :, 2] = 36
    canvas += rng.normal(0, 4, canvas.shape)
    body = _draw_silhouette(canvas, instrument, rng)
    _draw_defect(canvas, body, defect, rng)
    canvas += rng.normal(0, 2, canvas.shape)
    return RasterImage(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))


def generate_synthetic_corpus(
    cell_counts: Mapping[tuple[InstrumentLabel, DefectLabel], int],
    image_size: int = 96,
    seed: int = 0,
    out_dir: Optional[str | Path] = None,
) -> DatasetManifest:
    """Draw ``cell_counts[(instrument, defect)]`` images per cell.

    Records are labeled to match the drawn content with three unanimous
    synthetic votes each. When ``out_dir`` is given the PNG files are
    written there and records carry paths relative to it.
    """
    records: list[AnnotationRecord] = []
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    cells = sorted(cell_counts.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value))
    for (instrument, defect), count in cells:
        if count < 0:
            raise ValueError(f"negative count for {(instrument, defect)}")
        slug_i = instrument.value.lower().replace(" ", "-")
        slug_d = defect.value.lower()
        for k in range(count):
            rng = np.random.default_rng(
                (seed, list(InstrumentLabel).index(instrument),
                 list(DefectLabel).index(defect), k)
            )
            record_id = f"syn-{slug_i}-{slug_d}-{k:04d}"
            filename = f"{record_id}.png"
            if out_path is not None:
                save_png(draw_sample(instrument, defect, image_size, rng), out_path / filename)
            votes = tuple(
                AnnotationVote(annotator, instrument, defect) for annotator in _ANNOTATORS
            )
            records.append(
                AnnotationRecord(
                    record_id=record_id,
                    image_path=filename,
                    votes=votes,
                    resolved_instrument=instrument,
                    resolved_defect=defect,
                    status=RecordStatus.RESOLVED,
                    provenance=Provenance.synthetic(),
                )
            )
    return DatasetManifest(tuple(records))
