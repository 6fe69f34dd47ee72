"""Supervised training loop, evaluation, and repeated-run statistics.

A run is fully determined by (model config, data arrays, settings.seed): the
torch RNG drives weight init, a numpy Generator drives batch order and
augmentation draws, and inference runs single-threaded. Validation and test
data never touch parameter updates or augmentation statistics.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .csi_data import SplitAssignment, Window
from .errors import TrainingFailure
from .models import ModelConfig, build_model
from .preprocess import (
    ChannelStats,
    MixupParams,
    SmoothingParams,
    augment_batch,
    compute_channel_stats,
    one_hot,
    standardize_array,
)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    early_stop_patience: int = 15
    seed: int = 0
    repeats: int = 3
    smoothing: SmoothingParams | None = None
    mixup: MixupParams | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.mixup is not None and self.mixup.enabled and self.batch_size < 2:
            raise ValueError("mixup needs batch_size >= 2")
        if self.batch_size < 1 or self.early_stop_patience < 1 or self.repeats < 1:
            raise ValueError("batch_size, early_stop_patience and repeats must be >= 1")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        doc = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "early_stop_patience": self.early_stop_patience,
            "seed": self.seed,
            "repeats": self.repeats,
            "smoothing": None,
            "mixup": None,
        }
        if self.smoothing is not None:
            doc["smoothing"] = {
                "kernel_size": self.smoothing.kernel_size,
                "sigma": self.smoothing.sigma,
                "apply_probability": self.smoothing.apply_probability,
            }
        if self.mixup is not None and self.mixup.enabled:
            doc["mixup"] = {"alpha": self.mixup.alpha}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainSettings":
        d = dict(doc)
        smoothing = d.pop("smoothing", None)
        mixup = d.pop("mixup", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train settings: {sorted(unknown)}")
        if smoothing is not None:
            d["smoothing"] = SmoothingParams(**smoothing)
        if mixup is not None:
            d["mixup"] = MixupParams(**mixup)
        return cls(**d)


@dataclass
class RunRecord:
    seed: int
    best_val_accuracy: float
    test_accuracy: float
    epoch_of_best: int
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 <= self.best_val_accuracy <= 1.0 and 0.0 <= self.test_accuracy <= 1.0):
            raise ValueError("accuracies must lie in [0, 1]")
        if not all(math.isfinite(v) for v in self.loss_history):
            raise ValueError("loss history must be finite")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "best_val_accuracy": self.best_val_accuracy,
            "test_accuracy": self.test_accuracy,
            "epoch_of_best": self.epoch_of_best,
            "loss_history": self.loss_history,
        }


@dataclass(frozen=True)
class AccuracyStat:
    """mean/std over n repeated runs' test accuracies (population sigma)."""

    mean: float
    std: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.mean <= 1.0 or self.std < 0 or self.n < 1:
            raise ValueError(f"bad accuracy stat ({self.mean}, {self.std}, {self.n})")

    @classmethod
    def from_accuracies(cls, accuracies: Sequence[float]) -> "AccuracyStat":
        arr = np.asarray(accuracies, dtype=np.float64)
        return cls(mean=float(arr.mean()), std=float(arr.std()), n=len(arr))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n}


@dataclass
class SplitData:
    """Stacked window arrays for one train/val/test assignment."""

    x_train: np.ndarray  # [N, L, C] float32
    y_train: np.ndarray  # [N] int64
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int
    channel_stats: ChannelStats | None = None


def _stack(windows: Sequence[Window], idxs: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    xs = np.stack([windows[i].samples for i in idxs]).astype(np.float32)
    ys = np.asarray([windows[i].label for i in idxs], dtype=np.int64)
    return xs, ys


def prepare_split_data(windows: Sequence[Window], assignment: SplitAssignment,
                       num_classes: int, standardize: bool = True) -> SplitData:
    """Stack windows into arrays; channel statistics come from train only."""
    x_train, y_train = _stack(windows, assignment.train)
    x_val, y_val = _stack(windows, assignment.val)
    x_test, y_test = _stack(windows, assignment.test)
    stats = None
    if standardize:
        stats = compute_channel_stats(x_train)
        x_train = standardize_array(x_train, stats)
        x_val = standardize_array(x_val, stats)
        x_test = standardize_array(x_test, stats)
    return SplitData(x_train, y_train, x_val, y_val, x_test, y_test,
                     num_classes=num_classes, channel_stats=stats)


def _soft_cross_entropy(logits: torch.Tensor, soft_targets: torch.Tensor) -> torch.Tensor:
    return -(soft_targets * torch.log_softmax(logits, dim=1)).sum() / logits.shape[0]


def evaluate(model: torch.nn.Module, x: np.ndarray, y: np.ndarray,
             batch_size: int = 256) -> float:
    """Fraction of correct argmax predictions; ties go to the lowest class."""
    if len(x) == 0:
        raise ValueError("cannot evaluate on an empty set")
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(x), batch_size):
            chunk = torch.from_numpy(np.ascontiguousarray(x[start:start + batch_size]))
            logits = model(chunk).numpy()
            preds = np.argmax(logits, axis=1)  # first (lowest) index wins ties
            correct += int((preds == y[start:start + batch_size]).sum())
    return correct / len(x)


def train(cfg: ModelConfig, data: SplitData,
          settings: TrainSettings) -> tuple[torch.nn.Module, RunRecord]:
    """Train one model; return it with the best-validation weights loaded.

    Raises TrainingFailure (carrying .epoch) if the loss goes non-finite.
    """
    torch.set_num_threads(1)
    torch.manual_seed(settings.seed)
    rng = np.random.default_rng(settings.seed)

    model = build_model(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=settings.learning_rate)

    n_train = len(data.x_train)
    best_val = -1.0
    best_epoch = -1
    best_state: dict | None = None
    loss_history: list[float] = []

    for epoch in range(settings.epochs):
        model.train()
        order = rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, settings.batch_size):
            idx = order[start:start + settings.batch_size]
            xs = data.x_train[idx]
            ys = one_hot(data.y_train[idx], data.num_classes)
            # a trailing singleton batch cannot be mixed with a partner
            mixup = settings.mixup if len(idx) >= 2 else None
            xs, ys = augment_batch(xs, ys, settings.smoothing, mixup, rng)

            logits = model(torch.from_numpy(xs))
            loss = _soft_cross_entropy(logits, torch.from_numpy(ys))
            if not torch.isfinite(loss):
                raise TrainingFailure(
                    f"non-finite training loss at epoch {epoch}", epoch=epoch
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()))
        loss_history.append(float(np.mean(batch_losses)))

        val_acc = evaluate(model, data.x_val, data.y_val)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        elif epoch - best_epoch >= settings.early_stop_patience:
            break

    assert best_state is not None
    model.load_state_dict(best_state)
    test_acc = evaluate(model, data.x_test, data.y_test)
    record = RunRecord(seed=settings.seed, best_val_accuracy=best_val,
                       test_accuracy=test_acc, epoch_of_best=best_epoch,
                       loss_history=loss_history)
    return model, record


def repeat_runs(cfg: ModelConfig, data: SplitData,
                settings: TrainSettings) -> tuple[AccuracyStat, list[RunRecord]]:
    """Train with seeds seed..seed+n-1; aggregate test accuracies.

    A training failure mid-sweep re-raises with the completed records attached
    as ``partial_records``.
    """
    records: list[RunRecord] = []
    for i in range(settings.repeats):
        run_settings = dataclasses.replace(settings, seed=settings.seed + i)
        try:
            _, record = train(cfg, data, run_settings)
        except TrainingFailure as exc:
            exc.partial_records = records
            raise
        records.append(record)
    stat = AccuracyStat.from_accuracies([r.test_accuracy for r in records])
    return stat, records
