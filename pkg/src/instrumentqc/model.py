"""Classifier backends and the early-stopping training loop.

The loop is generic over :class:`TrainableModel`: it shuffles seeded
batches, applies the step-decayed learning-rate schedule, tracks the
best validation loss, and stops after a fixed number of non-improving
epochs, returning the checkpoint with the lowest validation loss.

The built-in :class:`SoftmaxClassifier` is a deliberately simple
backend for desk-scale verification: a fixed feature vector (per-channel
mean/variance, an 8-bin gradient-magnitude histogram, and 4x4
down-pooled intensities) under a softmax linear model trained by plain
gradient descent with L2 weight decay. Heavier networks plug in through
``load_external_backend`` instead.
"""

from __future__ import annotations

import abc
import io
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .imaging import NormalizedTensor

__all__ = [
    "ClassProbabilities",
    "ClassifierBackend",
    "TrainableModel",
    "TrainingConfig",
    "Checkpoint",
    "EpochStats",
    "TrainingLog",
    "lr_at_epoch",
    "cross_entropy",
    "train_with_early_stopping",
    "SoftmaxClassifier",
    "baseline_fit",
    "load_external_backend",
    "save_checkpoint",
    "load_checkpoint",
    "read_label_file",
]

_PROB_EPS = 1e-12


@dataclass(frozen=True)
class ClassProbabilities:
    """A distribution over an ordered label set."""

    labels: tuple[str, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        probs = tuple(float(p) for p in self.probabilities)
        if len(labels) != len(probs):
            raise ValueError("labels and probabilities must have the same length")
        if any(p < 0 for p in probs):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise ValueError(f"probabilities must sum to 1, got {sum(probs)}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probabilities", probs)

    def probability_of(self, label: str) -> float:
        try:
            return self.probabilities[self.labels.index(label)]
        except ValueError:
            raise KeyError(f"label {label!r} not in label set {self.labels}") from None

    def top(self) -> tuple[str, float]:
        idx = max(range(len(self.probabilities)), key=self.probabilities.__getitem__)
        return self.labels[idx], self.probabilities[idx]


class ClassifierBackend(abc.ABC):
    """Anything that maps a normalized tensor to class probabilities."""

    name: str = "backend"
    labels: tuple[str, ...] = ()

    @abc.abstractmethod
    def predict(self, tensor: NormalizedTensor) -> ClassProbabilities: ...


class TrainableModel(ClassifierBackend):
    """A backend the training loop can optimize and checkpoint."""

    @abc.abstractmethod
    def train_step(self, batch: Sequence[Any], lr: float) -> float: ...

    @abc.abstractmethod
    def evaluate(self, dataset: Sequence[Any]) -> float: ...

    @abc.abstractmethod
    def snapshot(self) -> "Checkpoint": ...

    @abc.abstractmethod
    def restore(self, checkpoint: "Checkpoint") -> None: ...


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of the training procedure."""

    image_size: int = 1024
    batch_size: int = 16
    initial_lr: float = 0.001
    epochs: int = 30
    patience: int = 5
    lr_decay_factor: float = 0.1
    lr_decay_every: int = 10
    dropout: float = 0.3
    weight_decay: float = 0.0005
    min_delta: float = 0.0
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("image_size", "batch_size", "initial_lr", "epochs", "patience",
                     "lr_decay_factor", "lr_decay_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed the epoch budget")
        if self.min_delta < 0 or self.weight_decay < 0:
            raise ValueError("min_delta and weight_decay must be non-negative")


@dataclass(frozen=True)
class Checkpoint:
    """Opaque serialized model state plus where it came from."""

    state: bytes
    epoch: int = 0
    validation_loss: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.validation_loss):
            raise ValueError("checkpoint validation loss must be finite")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass(frozen=True)
class TrainingLog:
    entries: tuple[EpochStats, ...]
    stop_reason: str  # "completed" | "early_stopped"
    best_epoch: int

    def __post_init__(self) -> None:
        losses = [e.val_loss for e in self.entries]
        best = next(e.epoch for e in self.entries if e.val_loss == min(losses))
        if best != self.best_epoch:
            raise ValueError(
                f"best_epoch {self.best_epoch} does not hold the minimum validation loss"
            )


def lr_at_epoch(config: TrainingConfig, epoch: int) -> float:
    """Step-decay schedule: initial rate cut by the decay factor every window.

    Epochs are 1-based, so epoch 10 still runs at the initial rate and
    epoch 11 is the first decayed one.
    """
    if not 1 <= epoch <= config.epochs:
        raise ValueError(f"epoch must lie in [1, {config.epochs}], got {epoch}")
    steps = (epoch - 1) // config.lr_decay_every
    # dividing by the reciprocal keeps decimal-friendly rates exact
    # (0.001 -> 0.0001 -> 0.00001), where repeated multiplication drifts an ulp
    return config.initial_lr / (1.0 / config.lr_decay_factor) ** steps


def cross_entropy(probs: ClassProbabilities, true_label: str) -> float:
    """Negative log-probability of the true label, clamped at 1e-12."""
    return -math.log(max(probs.probability_of(true_label), _PROB_EPS))


def train_with_early_stopping(
    model: TrainableModel,
    train: Sequence[Any],
    val: Sequence[Any],
    config: TrainingConfig,
) -> tuple[Checkpoint, TrainingLog]:
    """Run the epoch loop and return the lowest-validation-loss checkpoint.

    An epoch "improves" only if its validation loss is strictly lower
    than the best seen (minus ``min_delta``); after ``patience``
    consecutive non-improving epochs training stops early. The returned
    checkpoint always carries the global minimum of the log, whatever
    the stop reason.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and validation sets must be non-empty")

    best_loss = math.inf
    best_ckpt: Optional[Checkpoint] = None
    stall = 0
    entries: list[EpochStats] = []
    stop_reason = "completed"

    for epoch in range(1, config.epochs + 1):
        lr = lr_at_epoch(config, epoch)
        rng = np.random.default_rng((config.shuffle_seed, epoch))
        order = rng.permutation(len(train))
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            loss = model.train_step(batch, lr)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss {loss} at epoch {epoch}; aborting"
                )
            batch_losses.append(loss)
        val_loss = model.evaluate(val)
        if not math.isfinite(val_loss):
            raise RuntimeError(f"non-finite validation loss {val_loss} at epoch {epoch}")
        entries.append(EpochStats(epoch, float(np.mean(batch_losses)), val_loss, lr))

        if val_loss < best_loss - config.min_delta:
            best_loss = val_loss
            best_ckpt = replace(model.snapshot(), epoch=epoch, validation_loss=val_loss)
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                stop_reason = "early_stopped"
                break

    assert best_ckpt is not None
    log = TrainingLog(tuple(entries), stop_reason, best_ckpt.epoch)
    return best_ckpt, log


# ---------------------------------------------------------------------------
# Built-in softmax baseline
# ---------------------------------------------------------------------------

_GRADIENT_BINS = 8
_POOL_GRID = 4


def extract_features(tensor: NormalizedTensor) -> np.ndarray:
    """Fixed feature vector: channel stats, gradient histogram, pooled grid."""
    vals = tensor.values
    parts = [vals.mean(axis=(0, 1)), vals.var(axis=(0, 1))]

    intensity = vals.mean(axis=2)
    gy, gx = np.gradient(intensity)
    magnitude = np.hypot(gx, gy)
    hist, _ = np.histogram(np.clip(magnitude, 0.0, 0.5), bins=_GRADIENT_BINS, range=(0.0, 0.5))
    parts.append(hist / magnitude.size)

    h, w = intensity.shape
    ys = np.linspace(0, h, _POOL_GRID + 1).astype(int)
    xs = np.linspace(0, w, _POOL_GRID + 1).astype(int)
    pooled = np.empty(_POOL_GRID * _POOL_GRID)
    for i in range(_POOL_GRID):
        for j in range(_POOL_GRID):
            cell = intensity[ys[i] : max(ys[i + 1], ys[i] + 1), xs[j] : max(xs[j + 1], xs[j] + 1)]
            pooled[i * _POOL_GRID + j] = cell.mean()
    parts.append(pooled)
    return np.concatenate(parts)


class SoftmaxClassifier(TrainableModel):
    """Linear softmax model over extracted features, trained by gradient descent.

    Training samples are (feature_vector, label_index) pairs; prediction
    takes a tensor, extracts features, and standardizes them with the
    statistics captured at fit time.
    """

    def __init__(
        self,
        labels: Sequence[str],
        feature_mean: np.ndarray,
        feature_std: np.ndarray,
        weight_decay: float = 0.0005,
        name: str = "softmax-baseline",
    ) -> None:
        self.labels = tuple(labels)
        self.name = name
        self.feature_mean = np.asarray(feature_mean, dtype=np.float64)
        self.feature_std = np.asarray(feature_std, dtype=np.float64)
        self.weight_decay = float(weight_decay)
        dim = self.feature_mean.size
        self.weights = np.zeros((len(self.labels), dim))
        self.bias = np.zeros(len(self.labels))

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feature_mean) / self.feature_std

    def _forward(self, x: np.ndarray) -> np.ndarray:
        logits = x @ self.weights.T + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        return exp / exp.sum(axis=1, keepdims=True)

    def loss_and_gradients(
        self, batch: Sequence[tuple[np.ndarray, int]]
    ) -> tuple[float, np.ndarray, np.ndarray]:
        """Batch objective (mean CE + L2 penalty) with analytic gradients."""
        x = np.stack([sample[0] for sample in batch])
        y = np.array([sample[1] for sample in batch])
        probs = self._forward(x)
        n = len(batch)
        ce = -np.log(np.maximum(probs[np.arange(n), y], _PROB_EPS)).mean()
        loss = ce + 0.5 * self.weight_decay * float((self.weights**2).sum())
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        grad_w = dlogits.T @ x + self.weight_decay * self.weights
        grad_b = dlogits.sum(axis=0)
        return float(loss), grad_w, grad_b

    def batch_loss(self, batch: Sequence[tuple[np.ndarray, int]]) -> float:
        return self.loss_and_gradients(batch)[0]

    def train_step(self, batch: Sequence[tuple[np.ndarray, int]], lr: float) -> float:
        loss, grad_w, grad_b = self.loss_and_gradients(batch)
        self.weights -= lr * grad_w
        self.bias -= lr * grad_b
        return loss

    def evaluate(self, dataset: Sequence[tuple[np.ndarray, int]]) -> float:
        x = np.stack([sample[0] for sample in dataset])
        y = np.array([sample[1] for sample in dataset])
        probs = self._forward(x)
        return float(-np.log(np.maximum(probs[np.arange(len(y)), y], _PROB_EPS)).mean())

    def predict(self, tensor: NormalizedTensor) -> ClassProbabilities:
        x = self.standardize(extract_features(tensor))[np.newaxis, :]
        probs = self._forward(x)[0]
        return ClassProbabilities(self.labels, tuple(probs / probs.sum()))

    def snapshot(self) -> Checkpoint:
        buf = io.BytesIO()
        np.savez(
            buf,
            weights=self.weights,
            bias=self.bias,
            feature_mean=self.feature_mean,
            feature_std=self.feature_std,
        )
        meta = {
            "labels": list(self.labels),
            "weight_decay": self.weight_decay,
            "name": self.name,
        }
        payload = json.dumps(meta).encode() + b"\x00" + buf.getvalue()
        return Checkpoint(state=payload)

    def restore(self, checkpoint: Checkpoint) -> None:
        meta_raw, _, arrays_raw = checkpoint.state.partition(b"\x00")
        meta = json.loads(meta_raw.decode())
        arrays = np.load(io.BytesIO(arrays_raw))
        self.labels = tuple(meta["labels"])
        self.weight_decay = float(meta["weight_decay"])
        self.name = meta["name"]
        self.weights = arrays["weights"]
        self.bias = arrays["bias"]
        self.feature_mean = arrays["feature_mean"]
        self.feature_std = arrays["feature_std"]

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "SoftmaxClassifier":
        model = cls(labels=("placeholder", "placeholder2"),
                    feature_mean=np.zeros(1), feature_std=np.ones(1))
        model.restore(checkpoint)
        return model


def baseline_fit(
    train: Sequence[tuple[NormalizedTensor, str]],
    labels: Sequence[str],
    seed: int,
    val: Optional[Sequence[tuple[NormalizedTensor, str]]] = None,
    config: Optional[TrainingConfig] = None,
) -> tuple[SoftmaxClassifier, TrainingLog]:
    """Fit the softmax baseline on (tensor, label) pairs.

    Features are extracted once, standardized with training-set
    statistics, and optimized through the early-stopping loop. When no
    validation set is given, a seeded 10% holdout (at least one sample)
    is carved from the training data.
    """
    labels = tuple(labels)
    if len(set(labels)) < 2:
        raise ValueError(f"need at least 2 distinct labels, got {labels}")
    present = {label for _, label in train}
    missing = [label for label in labels if label not in present]
    if missing:
        raise ValueError(f"labels without any training sample: {missing}")
    unknown = present - set(labels)
    if unknown:
        raise ValueError(f"training samples with undeclared labels: {sorted(unknown)}")

    cfg = config or TrainingConfig(shuffle_seed=seed)
    features = np.stack([extract_features(t) for t, _ in train])
    mean = features.mean(axis=0)
    std = np.maximum(features.std(axis=0), 1e-8)
    model = SoftmaxClassifier(labels, mean, std, weight_decay=cfg.weight_decay)

    index_of = {label: i for i, label in enumerate(labels)}
    samples = [
        (model.standardize(features[i]), index_of[label])
        for i, (_, label) in enumerate(train)
    ]
    if val is not None:
        val_samples = [
            (model.standardize(extract_features(t)), index_of[label]) for t, label in val
        ]
        train_samples = samples
    else:
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(samples))
        n_val = max(1, len(samples) // 10)
        val_samples = [samples[i] for i in order[:n_val]]
        train_samples = [samples[i] for i in order[n_val:]]
        if not train_samples:
            raise ValueError("not enough samples to hold out a validation split")

    checkpoint, log = train_with_early_stopping(model, train_samples, val_samples, cfg)
    model.restore(checkpoint)
    return model, log


# ---------------------------------------------------------------------------
# Checkpoint files and external backends
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"IQCK"
_CKPT_VERSION = 1


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Write a checkpoint file: magic, version, metadata, opaque state."""
    meta = json.dumps(
        {"epoch": checkpoint.epoch, "validation_loss": checkpoint.validation_loss}
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack(">HQQ", _CKPT_VERSION, len(meta), len(checkpoint.state)))
        fh.write(meta)
        fh.write(checkpoint.state)


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    version, meta_len, state_len = struct.unpack(">HQQ", data[4:22])
    if version != _CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(data[22 : 22 + meta_len].decode())
    state = data[22 + meta_len : 22 + meta_len + state_len]
    return Checkpoint(state=state, epoch=meta["epoch"], validation_loss=meta["validation_loss"])


def read_label_file(path: str | Path) -> tuple[str, ...]:
    """Newline-separated UTF-8 label names; blank lines ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    labels = tuple(line.strip() for line in lines if line.strip())
    if not labels:
        raise ValueError(f"{path}: label file is empty")
    return labels


def validate_onnx_input_shape(shape: Sequence[Any], expected_side: int = 1024) -> str:
    """Check a session input shape against the expected square RGB input.

    Accepts NCHW or NHWC with a symbolic/1 batch dimension and returns
    the detected layout.
    """
    dims = list(shape)
    if len(dims) != 4:
        raise ValueError(f"expected a 4-d input, got {shape}")

    def concrete(d):
        return d if isinstance(d, int) else None

    _, a, b, c = (concrete(d) for d in dims)
    if (a, b, c) == (3, expected_side, expected_side):
        return "nchw"
    if (a, b, c) == (expected_side, expected_side, 3):
        return "nhwc"
    raise ValueError(
        f"model expects input shape {shape}, not {expected_side}x{expected_side}x3"
    )


class OnnxBackend(ClassifierBackend):
    """Classifier served from an ONNX file via onnxruntime."""

    def __init__(self, session, labels: tuple[str, ...], layout: str, name: str) -> None:
        self._session = session
        self.labels = labels
        self._layout = layout
        self.name = name

    def predict(self, tensor: NormalizedTensor) -> ClassProbabilities:
        vals = tensor.values.astype(np.float32)
        if self._layout == "nchw":
            vals = np.transpose(vals, (2, 0, 1))
        batch = vals[np.newaxis, ...]
        input_name = self._session.get_inputs()[0].name
        raw = np.asarray(self._session.run(None, {input_name: batch})[0]).reshape(-1)
        if raw.size != len(self.labels):
            raise ValueError(
                f"model emitted {raw.size} scores for {len(self.labels)} labels"
            )
        if raw.min() < 0 or abs(raw.sum() - 1.0) > 1e-3:
            raw = np.exp(raw - raw.max())  # treat as logits
        probs = raw / raw.sum()
        return ClassProbabilities(self.labels, tuple(float(p) for p in probs))


def load_external_backend(
    model_file: str | Path,
    label_file: str | Path,
    input_size: int = 1024,
) -> ClassifierBackend:
    """Wrap a serialized network (ONNX) behind the backend interface.

    The label file supplies the ordered label set; the model's declared
    input must be a square RGB image of ``input_size``. Fine-tuning and
    export happen in external tooling; this only consumes the artifact.
    """
    model_path = Path(model_file)
    if not model_path.exists():
        raise FileNotFoundError(f"model file not found: {model_path}")
    labels = read_label_file(label_file)
    if model_path.suffix.lower() != ".onnx":
        raise ValueError(f"unsupported model format: {model_path.suffix!r} (expected .onnx)")
    try:
        import onnxruntime  # deferred: heavy optional dependency
    except ImportError as exc:
        raise RuntimeError(
            "loading ONNX backends requires onnxruntime (install the 'onnx' extra)"
        ) from exc
    try:
        session = onnxruntime.InferenceSession(
            str(model_path), providers=["CPUExecutionProvider"]
        )
    except Exception as exc:
        raise ValueError(f"{model_path}: not a loadable ONNX model: {exc}") from exc
    layout = validate_onnx_input_shape(session.get_inputs()[0].shape, input_size)
    return OnnxBackend(session, labels, layout, name=model_path.stem)
