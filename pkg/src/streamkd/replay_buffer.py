"""Fixed-capacity episodic memory: reservoir writes, uniform retrieval.

Each offered sample gets the classical per-sample reservoir treatment, so
after n >= M offers every sample resides with probability M/n. Items carry
stable integer handles; evicting an item invalidates its handle.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


class StaleHandleError(KeyError):
    """An item id that is no longer (or never was) resident."""


@dataclass(frozen=True)
class MemoryBatch:
    """A retrieval result; stored_logits is None unless the buffer keeps logits."""

    images: np.ndarray
    labels: np.ndarray
    stored_logits: Optional[np.ndarray]
    item_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


class ReplayBuffer:
    """Reservoir-sampled memory of (image, label[, logits]) triples."""

    def __init__(self, capacity: int, image_shape: tuple[int, int, int],
                 n_classes: int, store_logits: bool = False, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.n_classes = n_classes
        self.store_logits = store_logits
        self.n_seen = 0
        self._images = np.zeros((capacity, *image_shape), dtype=np.float32)
        self._labels = np.zeros(capacity, dtype=np.int64)
        self._logits = np.zeros((capacity, n_classes), dtype=np.float32) if store_logits else None
        self._item_ids = np.full(capacity, -1, dtype=np.int64)
        self._slot_of: dict[int, int] = {}
        self._next_id = 0
        # separate write/read generators keep buffer contents identical across
        # runs that differ only in how often they retrieve
        self._rng_store = np.random.default_rng([seed, 0])
        self._rng_sample = np.random.default_rng([seed, 1])

    def __len__(self) -> int:
        return min(self.n_seen, self.capacity)

    def reservoir_update(self, images: np.ndarray, labels: np.ndarray,
                         logits: Optional[np.ndarray] = None) -> None:
        """Offer a batch; each sample independently follows the reservoir rule."""
        if len(images) != len(labels):
            raise ValueError("images and labels disagree on batch size")
        if logits is not None and len(logits) != len(labels):
            raise ValueError("logits must align 1:1 with batch rows")
        if self.store_logits and logits is None:
            raise ValueError("buffer stores logits; reservoir_update needs them")
        n = len(labels)
        if n == 0:
            return
        # one vectorized draw per batch: sample t (0-based global count) draws
        # uniformly from {0, ..., t}, accepted into slot j if j < capacity
        highs = self.n_seen + 1 + np.arange(n)
        draws = self._rng_store.integers(0, highs)
        for i in range(n):
            t = self.n_seen + i
            slot = t if t < self.capacity else (draws[i] if draws[i] < self.capacity else -1)
            if slot >= 0:
                self._write(int(slot), images[i], int(labels[i]),
                            None if logits is None else logits[i])
        self.n_seen += n

    def _write(self, slot: int, image: np.ndarray, label: int,
               logits: Optional[np.ndarray]) -> None:
        old_id = self._item_ids[slot]
        if old_id >= 0:
            del self._slot_of[int(old_id)]
        self._images[slot] = image
        self._labels[slot] = label
        if self._logits is not None:
            if logits.shape != (self.n_classes,):
                raise ValueError(f"stored logits must have length {self.n_classes}")
            self._logits[slot] = logits
        self._item_ids[slot] = self._next_id
        self._slot_of[self._next_id] = slot
        self._next_id += 1

    def random_retrieve(self, k: int) -> MemoryBatch:
        """Uniform sample of min(k, occupancy) items without replacement."""
        if k < 0:
            raise ValueError("k must be >= 0")
        size = len(self)
        take = min(k, size)
        slots = self._rng_sample.choice(size, size=take, replace=False) if take else np.empty(0, dtype=np.int64)
        return MemoryBatch(
            images=self._images[slots].copy(),
            labels=self._labels[slots].copy(),
            stored_logits=self._logits[slots].copy() if self._logits is not None else None,
            item_ids=self._item_ids[slots].copy(),
        )

    def update_stored_logits(self, item_ids: np.ndarray, logits: np.ndarray) -> None:
        """Replace the stored logits of resident items; images/labels untouched."""
        if self._logits is None:
            raise ValueError("buffer was created without logit storage")
        logits = np.asarray(logits, dtype=np.float32)
        if logits.shape != (len(item_ids), self.n_classes):
            raise ValueError(f"logits must be [{len(item_ids)}, {self.n_classes}]")
        slots = []
        for item_id in item_ids:
            slot = self._slot_of.get(int(item_id))
            if slot is None:
                raise StaleHandleError(f"item id {int(item_id)} is not resident")
            slots.append(slot)
        for slot, row in zip(slots, logits):
            self._logits[slot] = row

    def snapshot(self) -> MemoryBatch:
        """Read-only copy of the full contents (metric probes, NCM)."""
        size = len(self)
        return MemoryBatch(
            images=self._images[:size].copy(),
            labels=self._labels[:size].copy(),
            stored_logits=self._logits[:size].copy() if self._logits is not None else None,
            item_ids=self._item_ids[:size].copy(),
        )

    def dump(self, directory: str | Path) -> None:
        """Write contents to a directory: images.npy + a TSV label/logits table."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        snap = self.snapshot()
        np.save(directory / "images.npy", snap.images)
        with open(directory / "items.tsv", "w") as fh:
            logit_cols = ("\t" + "\t".join(f"logit_{c}" for c in range(self.n_classes))) if self.store_logits else ""
            fh.write(f"item_id\tlabel{logit_cols}\n")
            for i in range(len(snap)):
                row = f"{snap.item_ids[i]}\t{snap.labels[i]}"
                if snap.stored_logits is not None:
                    row += "\t" + "\t".join(repr(float(v)) for v in snap.stored_logits[i])
                fh.write(row + "\n")
