"""Augmentation recipe and expansion-arithmetic tests."""

import numpy as np
import pytest

from instrumentqc.augment import (
    AugmentationRecipe,
    TransformSpec,
    augment_image,
    augment_manifest,
    build_recipe,
    recipe_from_json,
    recipe_to_json,
)
from instrumentqc.dataset import (
    AnnotationRecord,
    DatasetManifest,
    DefectLabel,
    InstrumentLabel,
    RecordStatus,
    SplitName,
)
from instrumentqc.imaging import RasterImage, load_png, save_png, transform_geometric


def random_image(seed=0, h=12, w=10):
    rng = np.random.default_rng(seed)
    return RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


def resolved_record(record_id, image_path=None):
    return AnnotationRecord(
        record_id=record_id,
        image_path=image_path or f"{record_id}.png",
        resolved_instrument=InstrumentLabel.SCISSORS,
        resolved_defect=DefectLabel.CRACK,
        status=RecordStatus.RESOLVED,
    )


# ---------------------------------------------------------------------------
# recipe
# ---------------------------------------------------------------------------

def test_default_recipe_has_twelve_distinct_transforms():
    recipe = build_recipe()
    assert len(recipe.transforms) == 12  # 102876 / 8573 expansions per original
    assert len(set(recipe.names)) == 12


def test_default_recipe_parameters_are_valid():
    # TransformSpec validates its own parameters at construction; applying
    # each to a real image exercises the imaging preconditions too
    img = random_image()
    for spec, out in zip(build_recipe().transforms, augment_image(img, build_recipe(), 0)):
        assert out.pixels.dtype == np.uint8, spec.name


def test_recipe_rejects_wrong_length_and_duplicates():
    transforms = list(build_recipe().transforms)
    with pytest.raises(ValueError):
        AugmentationRecipe(tuple(transforms[:11]))
    dupe = transforms[:11] + [transforms[0]]
    with pytest.raises(ValueError):
        AugmentationRecipe(tuple(dupe))


def test_transform_spec_validates_parameters():
    with pytest.raises(ValueError):
        TransformSpec("too-bright", "adjust", {"kind": "brightness", "delta": 25})
    with pytest.raises(ValueError):
        TransformSpec("bad-kind", "adjust", {"kind": "hue", "delta": 5})
    with pytest.raises(ValueError):
        TransformSpec("bad-crop", "crop", {"x_frac": 0.8, "y_frac": 0.0, "w_frac": 0.5, "h_frac": 0.5})
    with pytest.raises(ValueError):
        TransformSpec("mystery", "warp", {})


def test_recipe_json_roundtrip():
    recipe = build_recipe()
    assert recipe_from_json(recipe_to_json(recipe)) == recipe


# ---------------------------------------------------------------------------
# augment_image
# ---------------------------------------------------------------------------

def test_augment_image_emits_twelve_outputs():
    outputs = augment_image(random_image(), build_recipe(), seed=5)
    assert len(outputs) == 12


def test_rot180_output_matches_imaging_op():
    img = random_image(3)
    recipe = build_recipe()
    outputs = augment_image(img, recipe, seed=5)
    idx = recipe.names.index("rot180")
    assert outputs[idx].same_pixels(transform_geometric(img, "rot180"))


def test_augment_image_deterministic():
    img = random_image(7)
    recipe = build_recipe()
    a = augment_image(img, recipe, seed=9, record_key="r1")
    b = augment_image(img, recipe, seed=9, record_key="r1")
    assert all(x.same_pixels(y) for x, y in zip(a, b))
    c = augment_image(img, recipe, seed=10, record_key="r1")
    idx = recipe.names.index("noise-sigma8")
    assert not a[idx].same_pixels(c[idx])


# ---------------------------------------------------------------------------
# augment_manifest
# ---------------------------------------------------------------------------

def test_corpus_expansion_arithmetic():
    # per-instrument originals and the 12x expansions they must produce
    originals = {
        "Bandage Scissors": (894, 10728),
        "Carver": (961, 11532),
        "Dressing Forceps": (691, 8292),
        "Ex-Probe": (885, 10620),
        "McIndoe Forceps": (537, 6444),
        "Nail Clipper": (829, 9948),
        "Probe": (811, 9732),
        "Scalpel": (620, 7440),
        "Scissors": (1007, 12084),
        "TV Forceps": (670, 8040),
        "Uterine Curette": (668, 8016),
    }
    assert sum(v[0] for v in originals.values()) == 8573
    assert sum(v[1] for v in originals.values()) == 102876
    recipe = build_recipe()
    for name, (count, expected) in originals.items():
        instrument = InstrumentLabel(name)
        records = tuple(
            AnnotationRecord(
                record_id=f"{instrument.name}-{i}",
                image_path=f"{i}.png",
                resolved_instrument=instrument,
                resolved_defect=DefectLabel.CRACK,
                status=RecordStatus.RESOLVED,
            )
            for i in range(count)
        )
        expanded = augment_manifest(DatasetManifest(records), recipe)
        augmented = [r for r in expanded.records if r.provenance.kind == "augmented"]
        assert len(augmented) == expected == 12 * count


def test_augmented_records_inherit_labels_and_split():
    manifest = DatasetManifest(
        (resolved_record("r1"),), {"r1": SplitName.VAL}
    )
    expanded = augment_manifest(manifest, build_recipe(), seed=3)
    augmented = [r for r in expanded.records if r.provenance.kind == "augmented"]
    assert len(augmented) == 12
    for child in augmented:
        assert child.resolved_instrument is InstrumentLabel.SCISSORS
        assert child.resolved_defect is DefectLabel.CRACK
        assert child.provenance.parent_id == "r1"
        assert expanded.split_assignments[child.record_id] is SplitName.VAL


def test_empty_manifest_expands_to_empty():
    expanded = augment_manifest(DatasetManifest(()), build_recipe())
    assert len(expanded.records) == 0


def test_already_augmented_records_not_rederived():
    parent = resolved_record("r1")
    manifest = augment_manifest(DatasetManifest((parent,)), build_recipe())
    again = augment_manifest(manifest, build_recipe())
    augmented = [r for r in again.records if r.provenance.kind == "augmented"]
    assert len(augmented) == 12


def test_augment_rejects_unresolved():
    pending = AnnotationRecord(record_id="r1", image_path="r1.png")
    with pytest.raises(ValueError):
        augment_manifest(DatasetManifest((pending,)), build_recipe())


def test_augment_materializes_images(tmp_path):
    src = tmp_path / "src"
    out = tmp_path / "aug"
    src.mkdir()
    img = random_image(11, h=8, w=8)
    save_png(img, src / "r1.png")
    manifest = DatasetManifest((resolved_record("r1"),))
    expanded = augment_manifest(
        manifest, build_recipe(), seed=2, images_dir=out, source_dir=src
    )
    augmented = [r for r in expanded.records if r.provenance.kind == "augmented"]
    assert len(list(out.glob("*.png"))) == 12
    rot = next(r for r in augmented if r.provenance.transform_name == "rot180")
    loaded = load_png(out / rot.image_path.split("/")[-1])
    assert loaded.same_pixels(transform_geometric(img, "rot180"))
