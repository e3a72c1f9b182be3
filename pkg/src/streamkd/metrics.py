"""Evaluation metrics: accuracy matrix, backward transfer, NCM probe,
feature drift, and confusion counts.

Model-facing helpers accept numpy arrays, run the network in eval mode in
minibatches, and hand back numpy/python values, so metric code stays free of
training-loop state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch


def _eval_forward(model, images: np.ndarray, fn: str, batch_size: int = 512) -> np.ndarray:
    was_training = getattr(model, "training", False)
    if hasattr(model, "eval"):
        model.eval()
    outs = []
    with torch.inference_mode():
        for start in range(0, len(images), batch_size):
            chunk = torch.from_numpy(images[start:start + batch_size])
            outs.append(getattr(model, fn)(chunk).numpy())
    if was_training:
        model.train()
    if not outs:
        raise ValueError("empty input")
    return np.concatenate(outs, axis=0)


def predict(model, images: np.ndarray, batch_size: int = 512) -> np.ndarray:
    return _eval_forward(model, images, "forward", batch_size).argmax(axis=1)


def accuracy(model, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 512) -> float:
    return float(np.mean(predict(model, images, batch_size) == labels))


class AccuracyMatrix:
    """a[k][i] = accuracy on task i after finishing training task k (NaN if unrecorded)."""

    def __init__(self, n_tasks: int):
        if n_tasks < 1:
            raise ValueError("need at least one task")
        self.a = np.full((n_tasks, n_tasks), np.nan)

    @property
    def n_tasks(self) -> int:
        return self.a.shape[0]

    def record(self, after_task: int, on_task: int, acc: float) -> None:
        if not 0.0 <= acc <= 1.0:
            raise ValueError(f"accuracy {acc} outside [0, 1]")
        self.a[after_task, on_task] = acc

    def save(self, path: str | Path) -> None:
        np.savetxt(path, self.a, fmt="%.6f", header="rows: after task k; cols: on task i")

    @classmethod
    def load(cls, path: str | Path) -> "AccuracyMatrix":
        data = np.atleast_2d(np.loadtxt(path))
        m = cls(data.shape[0])
        m.a = data
        return m


def final_avg_accuracy(m: AccuracyMatrix) -> float:
    last = m.a[-1]
    if np.isnan(last).any():
        raise ValueError("final row has unrecorded entries")
    return float(last.mean())


def backward_transfer(m: AccuracyMatrix) -> float:
    k = m.n_tasks
    if k < 2:
        raise ValueError("backward transfer undefined for a single task")
    last = m.a[-1, :k - 1]
    diag = np.diag(m.a)[:k - 1]
    if np.isnan(last).any() or np.isnan(diag).any():
        raise ValueError("required entries unrecorded")
    return float(np.mean(last - diag))


def ncm_eval(model, memory, test_images: np.ndarray, test_labels: np.ndarray,
             batch_size: int = 512) -> float:
    """Nearest-class-mean probe: class centroids from memory features."""
    snap = memory.snapshot() if hasattr(memory, "snapshot") else memory
    if len(snap.images) == 0:
        raise ValueError("memory is empty")
    mem_feats = _eval_forward(model, snap.images, "features", batch_size)
    mem_labels = snap.labels
    classes = np.unique(test_labels)
    missing = sorted(set(classes.tolist()) - set(np.unique(mem_labels).tolist()))
    if missing:
        raise ValueError(f"no memory exemplars for classes {missing}")
    means = np.stack([mem_feats[mem_labels == c].mean(axis=0) for c in classes])
    test_feats = _eval_forward(model, test_images, "features", batch_size)
    # [N, K] squared distances to each class mean
    d2 = ((test_feats[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    pred = classes[d2.argmin(axis=1)]
    return float(np.mean(pred == test_labels))


def feature_drift(model_before, model_after, x_old: np.ndarray,
                  batch_size: int = 512) -> float:
    """L2 norm of the stacked feature-matrix difference on old-class inputs."""
    if len(x_old) == 0:
        raise ValueError("x_old is empty")
    f0 = _eval_forward(model_before, x_old, "features", batch_size)
    f1 = _eval_forward(model_after, x_old, "features", batch_size)
    return float(np.linalg.norm(f0 - f1))


@dataclass
class DriftSeries:
    steps: list[int] = field(default_factory=list)
    d: list[float] = field(default_factory=list)

    def append(self, step: int, value: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError("steps must increase")
        if value < 0:
            raise ValueError("drift is non-negative")
        self.steps.append(int(step))
        self.d.append(float(value))


def confusion_matrix(predictions: np.ndarray, labels: np.ndarray,
                     n_classes: int) -> np.ndarray:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError("predictions/labels length mismatch")
    for name, arr in (("predictions", predictions), ("labels", labels)):
        if len(arr) and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} contain ids outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return counts
