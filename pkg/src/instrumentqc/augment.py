"""Deterministic dataset expansion: every record fans out to exactly 12.

A recipe is an ordered list of named transforms with fixed parameters;
the default recipe pairs the photometric adjustments at +/-20, adds a
noise/denoise pair, the three quarter-turns, and a horizontal flip,
which lands exactly on the 12x expansion the corpus accounting uses.
Vertical flip and crop transforms exist for custom recipes but sit
outside the default.

The noise transform derives its generator seed from (corpus seed,
record id, transform name), so re-running an expansion is byte-stable
record by record.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .dataset import AnnotationRecord, DatasetManifest, Provenance, RecordStatus
from .imaging import (
    PixelRegion,
    RasterImage,
    add_noise,
    adjust,
    crop,
    denoise,
    load_png,
    save_png,
    transform_geometric,
)

__all__ = [
    "TransformSpec",
    "AugmentationRecipe",
    "build_recipe",
    "augment_image",
    "augment_manifest",
    "apply_transform",
    "derive_seed",
    "recipe_to_json",
    "recipe_from_json",
]

RECIPE_LENGTH = 12

_GEOMETRIC_OPS = ("rot90", "rot180", "rot270", "flip_h", "flip_v")
_ADJUST_KINDS = ("brightness", "contrast", "saturation", "sharpness")


@dataclass(frozen=True)
class TransformSpec:
    """One named transform with its fixed parameters."""

    name: str
    op: str
    params: dict

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("transform name must be non-empty")
        object.__setattr__(self, "params", dict(self.params))
        self._validate()

    def _validate(self) -> None:
        if self.op == "adjust":
            kind, delta = self.params.get("kind"), self.params.get("delta")
            if kind not in _ADJUST_KINDS:
                raise ValueError(f"{self.name}: unknown adjust kind {kind!r}")
            if not isinstance(delta, int) or not -20 <= delta <= 20:
                raise ValueError(f"{self.name}: delta must be an integer in [-20, 20]")
        elif self.op == "add_noise":
            if self.params.get("sigma", -1) < 0:
                raise ValueError(f"{self.name}: noise sigma must be non-negative")
        elif self.op == "geometric":
            if self.params.get("op") not in _GEOMETRIC_OPS:
                raise ValueError(f"{self.name}: unknown geometric op")
        elif self.op == "crop":
            fracs = [self.params.get(k) for k in ("x_frac", "y_frac", "w_frac", "h_frac")]
            if any(f is None for f in fracs):
                raise ValueError(f"{self.name}: crop needs x/y/w/h fractions")
            x, y, w, h = fracs
            if not (0 <= x and 0 <= y and w > 0 and h > 0 and x + w <= 1 and y + h <= 1):
                raise ValueError(f"{self.name}: crop fractions must stay inside the image")
        elif self.op != "denoise":
            raise ValueError(f"{self.name}: unknown operation {self.op!r}")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts (blake2b, not hash())."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def apply_transform(spec: TransformSpec, img: RasterImage, noise_seed: int = 0) -> RasterImage:
    if spec.op == "adjust":
        return adjust(img, spec.params["kind"], spec.params["delta"])
    if spec.op == "add_noise":
        return add_noise(img, spec.params["sigma"], noise_seed)
    if spec.op == "denoise":
        return denoise(img)
    if spec.op == "geometric":
        return transform_geometric(img, spec.params["op"])
    if spec.op == "crop":
        region = PixelRegion(
            x=int(spec.params["x_frac"] * img.width),
            y=int(spec.params["y_frac"] * img.height),
            w=max(1, int(spec.params["w_frac"] * img.width)),
            h=max(1, int(spec.params["h_frac"] * img.height)),
        )
        return crop(img, region)
    raise ValueError(f"unknown operation {spec.op!r}")


@dataclass(frozen=True)
class AugmentationRecipe:
    """Exactly 12 uniquely named transforms, applied independently."""

    transforms: tuple[TransformSpec, ...]

    def __post_init__(self) -> None:
        transforms = tuple(self.transforms)
        if len(transforms) != RECIPE_LENGTH:
            raise ValueError(f"recipe must hold exactly {RECIPE_LENGTH} transforms")
        names = [t.name for t in transforms]
        if len(set(names)) != len(names):
            raise ValueError("transform names must be distinct")
        object.__setattr__(self, "transforms", transforms)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.transforms)


def build_recipe() -> AugmentationRecipe:
    """The default 12-transform expansion."""
    return AugmentationRecipe(
        (
            TransformSpec("brightness+20", "adjust", {"kind": "brightness", "delta": 20}),
            TransformSpec("brightness-20", "adjust", {"kind": "brightness", "delta": -20}),
            TransformSpec("contrast+20", "adjust", {"kind": "contrast", "delta": 20}),
            TransformSpec("contrast-20", "adjust", {"kind": "contrast", "delta": -20}),
            TransformSpec("saturation+20", "adjust", {"kind": "saturation", "delta": 20}),
            TransformSpec("saturation-20", "adjust", {"kind": "saturation", "delta": -20}),
            TransformSpec("noise-sigma8", "add_noise", {"sigma": 8.0}),
            TransformSpec("denoise", "denoise", {}),
            TransformSpec("rot90", "geometric", {"op": "rot90"}),
            TransformSpec("rot180", "geometric", {"op": "rot180"}),
            TransformSpec("rot270", "geometric", {"op": "rot270"}),
            TransformSpec("flip-h", "geometric", {"op": "flip_h"}),
        )
    )


def augment_image(
    img: RasterImage,
    recipe: AugmentationRecipe,
    seed: int,
    record_key: str = "",
) -> list[RasterImage]:
    """Apply every transform independently to the original image."""
    return [
        apply_transform(spec, img, noise_seed=derive_seed(seed, record_key, spec.name))
        for spec in recipe.transforms
    ]


def _augmented_path(image_path: str, transform_name: str) -> str:
    # plain string surgery: pathlib is too slow for six-figure record counts
    head, sep, name = image_path.rpartition("/")
    stem, dot, ext = name.rpartition(".")
    if not dot:
        stem, ext = name, "png"
    return f"{head}{sep}{stem}__{transform_name}.{ext}"


def augment_manifest(
    manifest: DatasetManifest,
    recipe: AugmentationRecipe,
    seed: int = 0,
    images_dir: Optional[str | Path] = None,
    source_dir: Optional[str | Path] = None,
) -> DatasetManifest:
    """Fan each record out to 12 derived records inheriting labels and split.

    Records that are already augmented are passed through untouched, not
    re-derived. With ``images_dir`` set the transformed images are
    materialized (reading originals from ``source_dir``); otherwise only
    the records are created, which is all the accounting checks need.
    """
    unresolved = [r.record_id for r in manifest.records if not r.is_resolved]
    if unresolved:
        raise ValueError(f"cannot augment unresolved records: {unresolved[:5]}")

    out_dir = Path(images_dir) if images_dir is not None else None
    src_dir = Path(source_dir) if source_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    new_records: list[AnnotationRecord] = []
    splits = dict(manifest.split_assignments or {})
    existing = {r.record_id for r in manifest.records}
    for record in manifest.records:
        if record.provenance.kind == "augmented":
            continue
        if all(f"{record.record_id}+{s.name}" in existing for s in recipe.transforms):
            continue  # already expanded with this recipe; keep idempotent
        image = None
        if out_dir is not None:
            source = (src_dir / record.image_path) if src_dir else Path(record.image_path)
            image = load_png(source)
        outputs = (
            augment_image(image, recipe, seed, record.record_id) if image is not None else None
        )
        for idx, spec in enumerate(recipe.transforms):
            child_id = f"{record.record_id}+{spec.name}"
            child_path = _augmented_path(record.image_path, spec.name)
            if outputs is not None:
                save_png(outputs[idx], out_dir / Path(child_path).name)
            new_records.append(
                AnnotationRecord(
                    record_id=child_id,
                    image_path=child_path,
                    votes=(),
                    resolved_instrument=record.resolved_instrument,
                    resolved_defect=record.resolved_defect,
                    status=RecordStatus.RESOLVED,
                    provenance=Provenance.augmented(record.record_id, spec.name),
                )
            )
            if record.record_id in splits:
                splits[child_id] = splits[record.record_id]

    return DatasetManifest(
        manifest.records + tuple(new_records),
        splits or None,
    )


def recipe_to_json(recipe: AugmentationRecipe) -> str:
    return json.dumps(
        [{"name": t.name, "op": t.op, "params": t.params} for t in recipe.transforms],
        indent=2,
    )


def recipe_from_json(text: str) -> AugmentationRecipe:
    items = json.loads(text)
    return AugmentationRecipe(
        tuple(TransformSpec(item["name"], item["op"], item.get("params", {})) for item in items)
    )
