"""Class-incremental task schedules and the single-pass training stream.

A schedule partitions the dataset's classes into K disjoint tasks; the
stream iterators emit every training sample exactly once, either with
abrupt task switches (clear) or with a mixing window around each switch
(blurry).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .datasets import ArrayDataset, load_dataset

BOUNDARY_MODES = ("clear", "blurry")


@dataclass(frozen=True)
class StreamBatch:
    images: np.ndarray            # [B, C, H, W]
    labels: np.ndarray            # [B]
    step: int                     # global iteration index
    task_hint: Optional[int]      # None in blurry mode
    sample_ids: np.ndarray        # [B] global dataset indices, for audit

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TaskSchedule:
    """Ordered class-incremental tasks over one dataset."""

    dataset: ArrayDataset
    tasks: tuple[tuple[int, ...], ...]   # per-task sorted class ids
    boundary_mode: str
    blur_scale: int
    seed: int

    def __post_init__(self):
        seen: set[int] = set()
        for classes in self.tasks:
            overlap = seen.intersection(classes)
            if overlap:
                raise ValueError(f"task class sets overlap on {sorted(overlap)}")
            seen.update(classes)
        if seen != set(self.dataset.class_universe):
            raise ValueError("task class sets do not cover the dataset's class universe")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if self.blur_scale < 0:
            raise ValueError("blur_scale must be >= 0")
        if self.boundary_mode == "clear" and self.blur_scale > 0:
            raise ValueError("clear schedules must have blur_scale=0")

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def task_of_class(self, class_id: int) -> int:
        for k, classes in enumerate(self.tasks):
            if class_id in classes:
                return k
        raise KeyError(f"class {class_id} not in schedule")

    def train_indices(self, task: int) -> np.ndarray:
        mask = np.isin(self.dataset.train_labels, self.tasks[task])
        return np.flatnonzero(mask)

    def test_indices(self, task: int) -> np.ndarray:
        mask = np.isin(self.dataset.test_labels, self.tasks[task])
        return np.flatnonzero(mask)

    def task_sizes(self) -> list[int]:
        return [len(self.train_indices(k)) for k in range(self.n_tasks)]

    def task_end_positions(self) -> list[int]:
        """Cumulative train-sample counts; position i-1 is the nominal end of task i."""
        return np.cumsum(self.task_sizes()).tolist()

    def to_manifest(self) -> dict:
        return {
            "dataset": self.dataset.name,
            "boundary_mode": self.boundary_mode,
            "blur_scale": self.blur_scale,
            "seed": self.seed,
            "tasks": {str(k): list(classes) for k, classes in enumerate(self.tasks)},
        }

    def save_manifest(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_manifest(), indent=2) + "\n")


def build_schedule(dataset_id: str | ArrayDataset, n_tasks: int,
                   boundary_mode: str = "clear", blur_scale: int = 0,
                   seed: int = 0, data_root: str | Path | None = None) -> TaskSchedule:
    """Split the dataset's classes into n_tasks equal disjoint sets.

    The class-to-task assignment is a seeded permutation of the sorted class
    ids, so identical (dataset, seed) pairs give identical schedules.
    """
    dataset = dataset_id if isinstance(dataset_id, ArrayDataset) else load_dataset(dataset_id, root=data_root)
    classes = list(dataset.class_universe)
    if n_tasks < 1:
        raise ValueError("n_tasks must be >= 1")
    if len(classes) % n_tasks != 0:
        raise ValueError(f"{len(classes)} classes cannot be split into {n_tasks} equal tasks")
    per_task = len(classes) // n_tasks
    perm = np.random.default_rng(seed).permutation(np.asarray(classes, dtype=np.int64))
    tasks = tuple(tuple(sorted(perm[k * per_task:(k + 1) * per_task].tolist()))
                  for k in range(n_tasks))
    return TaskSchedule(dataset, tasks, boundary_mode, int(blur_scale), seed)


def _shuffled_task_indices(schedule: TaskSchedule, seed: int) -> list[np.ndarray]:
    """Per-task train indices in seeded shuffled order (shared by both modes)."""
    out = []
    for k in range(schedule.n_tasks):
        idx = schedule.train_indices(k)
        rng = np.random.default_rng([seed, k])
        out.append(rng.permutation(idx))
    return out


def _emit(schedule: TaskSchedule, order: np.ndarray, batch_size: int,
          task_hint: Optional[int], step_offset: int) -> Iterator[StreamBatch]:
    data = schedule.dataset
    for start in range(0, len(order), batch_size):
        ids = order[start:start + batch_size]
        yield StreamBatch(images=data.train_images[ids], labels=data.train_labels[ids],
                          step=step_offset + start // batch_size,
                          task_hint=task_hint, sample_ids=ids)
    return


def iter_clear(schedule: TaskSchedule, batch_size: int, seed: int) -> Iterator[StreamBatch]:
    """Single-pass stream with abrupt boundaries: tasks in order, batches never
    mix tasks, the final batch of each task may be partial."""
    if schedule.boundary_mode != "clear":
        raise ValueError("iter_clear requires a clear-boundary schedule")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    step = 0
    for k, order in enumerate(_shuffled_task_indices(schedule, seed)):
        for batch in _emit(schedule, order, batch_size, task_hint=k, step_offset=step):
            yield batch
            step = batch.step + 1


def blur_windows(schedule: TaskSchedule, blur_scale: int | None = None) -> list[tuple[int, int]]:
    """Half-open [start, end) sample-position ranges where two tasks may mix.

    Each boundary gets a window of exactly blur_scale positions, centered so
    that floor(blur_scale/2) positions fall before the nominal boundary.
    """
    bs = schedule.blur_scale if blur_scale is None else blur_scale
    if bs == 0:
        return []
    sizes = schedule.task_sizes()
    for k in range(schedule.n_tasks - 1):
        if bs > sizes[k] or bs > sizes[k + 1]:
            raise ValueError(f"blur_scale={bs} exceeds the size of a task adjacent "
                             f"to boundary {k} (sizes {sizes[k]}, {sizes[k + 1]})")
    ends = schedule.task_end_positions()
    w_before = bs // 2
    return [(ends[k] - w_before, ends[k] - w_before + bs) for k in range(schedule.n_tasks - 1)]


def _blurry_order(schedule: TaskSchedule, blur_scale: int, seed: int) -> np.ndarray:
    per_task = _shuffled_task_indices(schedule, seed)
    w_before = blur_scale // 2
    w_after = blur_scale - w_before
    pieces: list[np.ndarray] = []
    for k, idx in enumerate(per_task):
        head = w_after if k > 0 else 0
        tail = w_before if k < schedule.n_tasks - 1 else 0
        pieces.append(idx[head:len(idx) - tail])
        if k < schedule.n_tasks - 1:
            old_q = list(idx[len(idx) - tail:])
            new_q = list(per_task[k + 1][:w_after])
            rng = np.random.default_rng([seed, 10_000 + k])
            mixed = []
            for j in range(blur_scale):
                take_new = rng.random() < (j + 0.5) / blur_scale
                if (take_new and new_q) or not old_q:
                    mixed.append(new_q.pop(0))
                else:
                    mixed.append(old_q.pop(0))
            pieces.append(np.asarray(mixed, dtype=np.int64))
    return np.concatenate(pieces)


def iter_blurry(schedule: TaskSchedule, batch_size: int, blur_scale: int | None = None,
                seed: int = 0) -> Iterator[StreamBatch]:
    """Single-pass stream where adjacent tasks interleave inside each blur
    window with linearly ramping mixture probability; no task hints."""
    if schedule.boundary_mode != "blurry":
        raise ValueError("iter_blurry requires a blurry-boundary schedule")
    bs = schedule.blur_scale if blur_scale is None else blur_scale
    if bs < 0:
        raise ValueError("blur_scale must be >= 0")
    if bs == 0:
        # degenerate case must match the clear stream sample-for-sample,
        # including per-task partial batches
        clear_twin = replace(schedule, boundary_mode="clear", blur_scale=0)
        for batch in iter_clear(clear_twin, batch_size, seed):
            yield replace(batch, task_hint=None)
        return
    blur_windows(schedule, bs)  # validates window sizes against task sizes
    order = _blurry_order(schedule, bs, seed)
    yield from _emit(schedule, order, batch_size, task_hint=None, step_offset=0)
