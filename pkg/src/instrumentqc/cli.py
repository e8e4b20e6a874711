"""Command-line interface.

Subcommands cover the whole workflow: synthesize or augment a corpus,
train the baseline backends, evaluate them, run ad-hoc scans, benchmark
latency, run the statistics, and serve the HTTP API. Report-producing
commands write CSV/JSON plus matplotlib figures into their output
directory.

A trained model directory has this layout (written by ``train-baseline``):

    model_dir/
      meta.json           preprocessing settings and label bookkeeping
      instrument.ckpt     instrument-stage checkpoint
      defect/<name>.ckpt  one defect-stage checkpoint per instrument
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import click
import numpy as np

from .augment import augment_manifest, build_recipe, recipe_from_json
from .dataset import (
    DatasetManifest,
    DefectLabel,
    InstrumentLabel,
    SplitName,
    defect_contingency,
    stratified_split,
)
from .imaging import load_png, normalize, resize_bilinear, unsharp_mask
from .metrics import benchmark_latency, classification_report, confusion_matrix, roc_auc
from .model import (
    SoftmaxClassifier,
    TrainingConfig,
    baseline_fit,
    load_checkpoint,
    save_checkpoint,
)
from .pipeline import PipelineConfig, PreprocessSettings, run_scan
from .reporting import (
    write_anova_report,
    write_chi_square_report,
    write_latency_report,
    write_metrics_report,
    write_training_report,
)
from .stats import GroupSamples, chi_square_independence, cramers_v, levene_test, one_way_anova
from .store import EventStore
from .synthetic import generate_synthetic_corpus


def _load_config_file(path):
    """Shared JSON config; documented keys:

    confidence_threshold (float), model_dir, recipe (path to recipe JSON),
    store_dir, manifest, static_dir. Explicit CLI flags take precedence.
    """
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _resolve(flag_value, config: dict, key: str, default=None, required_for: str | None = None):
    value = flag_value if flag_value is not None else config.get(key, default)
    if value is None and required_for:
        raise click.ClickException(
            f"{required_for} needs --{key.replace('_', '-')} or {key!r} in the config file"
        )
    return value


def _preprocess_settings(meta: dict) -> PreprocessSettings:
    return PreprocessSettings(
        unsharp_sigma=meta.get("unsharp_sigma", 1.0),
        unsharp_amount=meta.get("unsharp_amount", 1.0),
        target_size=meta.get("target_size", 1024),
    )


def _preprocess_image(img, settings: PreprocessSettings):
    sharpened = unsharp_mask(img, settings.unsharp_sigma, settings.unsharp_amount)
    resized = resize_bilinear(sharpened, settings.target_size, settings.target_size)
    return normalize(resized)


def save_model_dir(model_dir, instrument_model, defect_models, settings: PreprocessSettings):
    model_dir = Path(model_dir)
    (model_dir / "defect").mkdir(parents=True, exist_ok=True)
    save_checkpoint(instrument_model.snapshot(), model_dir / "instrument.ckpt")
    defect_files = {}
    for label, model in defect_models.items():
        filename = f"{label.replace(' ', '_')}.ckpt"
        save_checkpoint(model.snapshot(), model_dir / "defect" / filename)
        defect_files[label] = filename
    meta = {
        "target_size": settings.target_size,
        "unsharp_sigma": settings.unsharp_sigma,
        "unsharp_amount": settings.unsharp_amount,
        "defect_files": defect_files,
    }
    (model_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")


def load_model_dir(model_dir, threshold: float = 0.50) -> PipelineConfig:
    model_dir = Path(model_dir)
    meta = json.loads((model_dir / "meta.json").read_text(encoding="utf-8"))
    instrument_model = SoftmaxClassifier.from_checkpoint(
        load_checkpoint(model_dir / "instrument.ckpt")
    )
    registry = {
        label: SoftmaxClassifier.from_checkpoint(
            load_checkpoint(model_dir / "defect" / filename)
        )
        for label, filename in meta["defect_files"].items()
    }
    return PipelineConfig(
        instrument_backend=instrument_model,
        defect_registry=registry,
        confidence_threshold=threshold,
        preprocess=_preprocess_settings(meta),
    )


def _manifest_tensors(manifest, images_dir, settings: PreprocessSettings):
    tensors = {}
    for record in manifest.records:
        img = load_png(Path(images_dir) / record.image_path)
        tensors[record.record_id] = _preprocess_image(img, settings)
    return tensors


@click.group()
def main():
    """Quality-control toolkit for surgical-instrument imagery."""


@main.command("make-corpus")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--per-cell", default=50, show_default=True)
@click.option("--image-size", default=96, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--instruments", default="Scissors,Scalpel,Probe,Nail Clipper", show_default=True)
@click.option("--defects", default="Crack,Scratches,Pores", show_default=True)
def make_corpus(out_dir, per_cell, image_size, seed, instruments, defects):
    """Generate a synthetic corpus with a manifest.jsonl next to the images."""
    instrument_labels = [InstrumentLabel(name.strip()) for name in instruments.split(",")]
    defect_labels = [DefectLabel(name.strip()) for name in defects.split(",")]
    cells = {(i, d): per_cell for i in instrument_labels for d in defect_labels}
    manifest = generate_synthetic_corpus(cells, image_size=image_size, seed=seed, out_dir=out_dir)
    manifest = stratified_split(manifest, seed=seed)
    manifest_path = Path(out_dir) / "manifest.jsonl"
    manifest.to_jsonl(manifest_path)
    click.echo(f"wrote {len(manifest.records)} records to {manifest_path}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="output manifest path")
@click.option("--images-dir", type=click.Path(exists=True), help="materialize transformed PNGs here")
@click.option("--source-dir", type=click.Path(exists=True), help="directory holding the original images")
@click.option("--recipe", "recipe_path", type=click.Path(exists=True), help="recipe JSON (default recipe otherwise)")
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file")
def augment(manifest, out, images_dir, source_dir, recipe_path, seed, config_path):
    """Expand a manifest 12x with the configured recipe."""
    loaded = DatasetManifest.from_jsonl(manifest)
    recipe_path = _resolve(recipe_path, _load_config_file(config_path), "recipe")
    recipe = (
        recipe_from_json(Path(recipe_path).read_text(encoding="utf-8"))
        if recipe_path
        else build_recipe()
    )
    expanded = augment_manifest(
        loaded, recipe, seed=seed, images_dir=images_dir, source_dir=source_dir
    )
    expanded.to_jsonl(out)
    augmented = sum(1 for r in expanded.records if r.provenance.kind == "augmented")
    click.echo(f"{len(loaded)} originals -> {augmented} augmented records ({out})")


@main.command("train-baseline")
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--images-dir", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--image-size", default=64, show_default=True, help="preprocess target size")
@click.option("--lr", default=0.3, show_default=True, help="initial learning rate for the shallow baseline")
@click.option("--seed", default=0, show_default=True)
def train_baseline(manifest, images_dir, out_dir, image_size, lr, seed):
    """Train instrument + per-instrument defect baselines from a manifest."""
    loaded = DatasetManifest.from_jsonl(manifest)
    if loaded.split_assignments is None:
        loaded = stratified_split(loaded, seed=seed)
    settings = PreprocessSettings(target_size=image_size)
    tensors = _manifest_tensors(loaded, images_dir, settings)
    config = TrainingConfig(initial_lr=lr, shuffle_seed=seed)

    def split_samples(split, label_of, keep=lambda r: True):
        return [
            (tensors[r.record_id], label_of(r))
            for r in loaded.records_in_split(split)
            if keep(r)
        ]

    instruments = sorted({r.resolved_instrument.value for r in loaded.records})
    train = split_samples(SplitName.TRAIN, lambda r: r.resolved_instrument.value)
    val = split_samples(SplitName.VAL, lambda r: r.resolved_instrument.value)
    instrument_model, log = baseline_fit(train, instruments, seed=seed, val=val, config=config)
    write_training_report(log, Path(out_dir) / "reports" / "instrument", name="instrument stage")
    click.echo(
        f"instrument model: best epoch {log.best_epoch}, {log.stop_reason}, "
        f"val loss {min(e.val_loss for e in log.entries):.4f}"
    )

    defect_models = {}
    for instrument in instruments:
        if instrument == InstrumentLabel.MISCELLANEOUS.value:
            continue
        keep = lambda r, i=instrument: r.resolved_instrument.value == i
        labels = sorted(
            {r.resolved_defect.value for r in loaded.records if keep(r)}
        )
        if len(labels) < 2:
            click.echo(f"skipping defect model for {instrument}: only labels {labels}")
            continue
        d_train = split_samples(SplitName.TRAIN, lambda r: r.resolved_defect.value, keep)
        d_val = split_samples(SplitName.VAL, lambda r: r.resolved_defect.value, keep)
        model, d_log = baseline_fit(d_train, labels, seed=seed, val=d_val, config=config)
        defect_models[instrument] = model
        write_training_report(
            d_log, Path(out_dir) / "reports" / f"defect-{instrument.replace(' ', '_')}",
            name=f"{instrument} defect stage",
        )
        click.echo(f"defect model [{instrument}]: best epoch {d_log.best_epoch}, {d_log.stop_reason}")

    save_model_dir(out_dir, instrument_model, defect_models, settings)
    click.echo(f"saved model directory to {out_dir}")


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--images-dir", required=True, type=click.Path(exists=True))
@click.option("--model-dir", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--split", default="test", show_default=True, type=click.Choice(["train", "val", "test"]))
@click.option("--seed", default=0, show_default=True, help="split seed for manifests without assignments")
def evaluate(manifest, images_dir, model_dir, out_dir, split, seed):
    """Score both stages on one split; writes CSV/JSON/figures per stage."""
    loaded = DatasetManifest.from_jsonl(manifest)
    if loaded.split_assignments is None:
        loaded = stratified_split(loaded, seed=seed)
    config = load_model_dir(model_dir)
    tensors = _manifest_tensors(loaded, images_dir, config.preprocess)
    records = loaded.records_in_split(SplitName(split))
    if not records:
        raise click.ClickException(f"no records in split {split!r}")

    instrument_model = config.instrument_backend
    pairs = []
    scores = []
    truths = []
    for record in records:
        probs = instrument_model.predict(tensors[record.record_id])
        pairs.append((record.resolved_instrument.value, probs.top()[0]))
        scores.append(probs)
        truths.append(record.resolved_instrument.value)
    cm = confusion_matrix(pairs, instrument_model.labels)
    report = classification_report(cm)
    try:
        auc = roc_auc(scores, truths)
    except ValueError:
        auc = None
    from dataclasses import replace as dc_replace
    report = dc_replace(report, roc_auc=auc)
    write_metrics_report(report, Path(out_dir) / "instrument", cm=cm, title="instrument")
    click.echo(f"instrument accuracy: {report.accuracy:.4f}")

    defect_pairs = []
    for record in records:
        backend = config.defect_registry.get(record.resolved_instrument.value)
        if backend is None:
            continue
        predicted = backend.predict(tensors[record.record_id]).top()[0]
        defect_pairs.append((record.resolved_defect.value, predicted))
    if defect_pairs:
        labels = sorted({t for t, _ in defect_pairs} | {p for _, p in defect_pairs})
        d_cm = confusion_matrix(defect_pairs, labels)
        d_report = classification_report(d_cm)
        write_metrics_report(d_report, Path(out_dir) / "defect", cm=d_cm, title="defect")
        click.echo(f"defect accuracy:     {d_report.accuracy:.4f}")


@main.command()
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--model-dir", type=click.Path(exists=True))
@click.option("--threshold", type=float)
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file")
def scan(images, model_dir, threshold, config_path):
    """Run the two-stage pipeline on PNG files; one JSON line per image."""
    file_config = _load_config_file(config_path)
    model_dir = _resolve(model_dir, file_config, "model_dir", required_for="scan")
    threshold = _resolve(threshold, file_config, "confidence_threshold", default=0.50)
    config = load_model_dir(model_dir, threshold=threshold)
    for path in images:
        result = run_scan(load_png(path), config)
        click.echo(json.dumps({"path": str(path), **result.to_dict()}))


@main.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--images-dir", required=True, type=click.Path(exists=True))
@click.option("--model-dir", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--limit", default=0, show_default=True, help="cap the number of timed images (0 = all)")
@click.option("--warmup", default=3, show_default=True)
def benchmark(manifest, images_dir, model_dir, out_dir, limit, warmup):
    """Time run_scan per image and report mean/median/p95/FPS."""
    loaded = DatasetManifest.from_jsonl(manifest)
    config = load_model_dir(model_dir)
    records = loaded.records[:limit] if limit else loaded.records
    images = [load_png(Path(images_dir) / r.image_path) for r in records]
    stats = benchmark_latency(lambda img: run_scan(img, config), images, warmup=warmup)
    write_latency_report(stats, out_dir)
    click.echo(
        f"{stats.count} scans: mean {stats.mean_ms:.2f} ms, median {stats.median_ms:.2f} ms, "
        f"p95 {stats.p95_ms:.2f} ms, {stats.fps:.1f} FPS"
    )


@main.group()
def stats():
    """Statistical validation commands."""


@stats.command("chi2")
@click.argument("source", type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
def stats_chi2(source, out_dir):
    """Chi-square independence on a manifest (.jsonl) or contingency CSV.

    A CSV holds row labels in the first column and one header line of
    column labels.
    """
    source = Path(source)
    if source.suffix == ".jsonl":
        manifest = DatasetManifest.from_jsonl(source)
        table = defect_contingency(manifest)
        name = "overall"
    else:
        with open(source, newline="", encoding="utf-8") as fh:
            reader = list(csv.reader(fh))
        col_labels = tuple(reader[0][1:])
        row_labels = tuple(row[0] for row in reader[1:])
        counts = np.array([[int(v) for v in row[1:]] for row in reader[1:]], dtype=np.int64)
        from .dataset import ContingencyTable
        table = ContingencyTable(row_labels, col_labels, counts)
        name = source.stem
    result = chi_square_independence(table)
    v = cramers_v(result.statistic, table.n, len(table.row_labels), len(table.col_labels))
    write_chi_square_report([(name, table.n, result, v)], out_dir)
    click.echo(
        f"{name}: chi2 = {result.statistic:.4f}, df = {result.df}, "
        f"p = {result.p_value:.6g}, V = {v:.4f}"
    )


@stats.command("anova")
@click.argument("source", type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
def stats_anova(source, out_dir):
    """Levene + one-way ANOVA from a CSV of (name, group, value) rows.

    A two-column (group, value) CSV runs a single unnamed test.
    """
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    named: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if len(header) >= 3:
            name, group, value = row[0], row[1], float(row[2])
        else:
            name, group, value = "groups", row[0], float(row[1])
        named[name][group].append(value)
    results = []
    for name, groups in named.items():
        samples = GroupSamples({g: tuple(v) for g, v in groups.items()})
        levene = levene_test(samples)
        anova = one_way_anova(samples)
        results.append((name, levene, anova))
        click.echo(
            f"{name}: Levene W = {levene.statistic:.4f} (p = {levene.p_value:.4g}), "
            f"F = {anova.statistic:.4f}, df = {anova.df}, p = {anova.p_value:.4g}"
        )
    write_anova_report(results, out_dir)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store-dir", type=click.Path())
@click.option("--model-dir", type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", type=click.Path(), help="manifest receiving review decisions")
@click.option("--static-dir", type=click.Path(exists=True), help="review UI files served at /ui")
@click.option("--threshold", type=float)
@click.option("--config", "config_path", type=click.Path(exists=True), help="JSON config file")
def serve(port, host, store_dir, model_dir, manifest_path, static_dir, threshold, config_path):
    """Run the HTTP service over a trained model directory."""
    import uvicorn

    from .service import create_app

    file_config = _load_config_file(config_path)
    store_dir = _resolve(store_dir, file_config, "store_dir", required_for="serve")
    model_dir = _resolve(model_dir, file_config, "model_dir", required_for="serve")
    manifest_path = _resolve(manifest_path, file_config, "manifest")
    static_dir = _resolve(static_dir, file_config, "static_dir")
    threshold = _resolve(threshold, file_config, "confidence_threshold", default=0.50)
    store = EventStore(store_dir)
    config = load_model_dir(model_dir, threshold=threshold)
    app = create_app(store, config, manifest_path=manifest_path, static_dir=static_dir)
    click.echo(f"serving on http://{host}:{port} (queue UI at /ui when static dir is set)")
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
