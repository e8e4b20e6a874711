"""Shared helpers: controllable stub backends and tiny PNG fixtures."""

import numpy as np
import pytest

from instrumentqc.imaging import RasterImage, encode_png
from instrumentqc.model import ClassifierBackend
from instrumentqc.pipeline import PipelineConfig, PreprocessSettings


class TopOnly:
    """Duck-typed probability holder; routing only reads top()."""

    def __init__(self, label, confidence):
        self._top = (label, confidence)

    def top(self):
        return self._top


class FixedBackend(ClassifierBackend):
    """Always predicts the same (label, confidence)."""

    def __init__(self, label, confidence, labels=("Scissors", "Miscellaneous")):
        self.labels = tuple(labels)
        self.name = f"fixed-{label}"
        self._label = label
        self._confidence = confidence

    def predict(self, tensor):
        return TopOnly(self._label, self._confidence)


def make_config(instrument_backend, defect_backend=None, threshold=0.50, target_size=24):
    return PipelineConfig(
        instrument_backend=instrument_backend,
        defect_registry={"Scissors": defect_backend or FixedBackend("Crack", 0.9)},
        confidence_threshold=threshold,
        preprocess=PreprocessSettings(target_size=target_size),
    )


@pytest.fixture
def png_bytes():
    rng = np.random.default_rng(0)
    img = RasterImage(rng.integers(0, 256, (20, 20, 3), dtype=np.uint8))
    return encode_png(img)
