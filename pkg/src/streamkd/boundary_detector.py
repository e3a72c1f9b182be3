"""Task-change inference for streams without boundary labels.

A change fires when a never-seen class shows up AND at least `min_gap`
iterations passed since the previous change. Seen classes accumulate even
when the gap rule blocks the event, so a class trickling in during a blur
window cannot fire twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MIN_GAP = 100


@dataclass(frozen=True)
class BoundaryState:
    seen_classes: frozenset[int]
    steps_since_change: int
    min_gap: int = DEFAULT_MIN_GAP


def initial_state(min_gap: int = DEFAULT_MIN_GAP) -> BoundaryState:
    # counter starts at min_gap so training start counts as a boundary
    return BoundaryState(frozenset(), min_gap, min_gap)


def observe(state: BoundaryState, batch_labels) -> tuple[BoundaryState, bool]:
    labels = frozenset(int(v) for v in np.asarray(batch_labels).ravel())
    has_new = not labels <= state.seen_classes
    changed = has_new and state.steps_since_change >= state.min_gap
    counter = 0 if changed else state.steps_since_change + 1
    return BoundaryState(state.seen_classes | labels, counter, state.min_gap), changed
