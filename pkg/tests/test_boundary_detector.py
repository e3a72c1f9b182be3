import numpy as np

from streamkd.boundary_detector import BoundaryState, initial_state, observe


def _drive(labels_per_step, min_gap):
    state = initial_state(min_gap)
    fired = []
    for step, labels in enumerate(labels_per_step):
        state, changed = observe(state, labels)
        if changed:
            fired.append(step)
    return fired, state


def test_first_batch_fires_immediately():
    fired, _ = _drive([[0, 1]], min_gap=100)
    assert fired == [0]


def test_gap_suppresses_early_novelty():
    # class 2 appears 3 steps after the first fire; blocked, but remembered
    stream = [[0], [0], [0], [2], [0], [0], [2], [0]]
    fired, state = _drive(stream, min_gap=5)
    assert fired == [0]
    assert state.seen_classes == frozenset({0, 2})


def test_fires_once_counter_reaches_gap():
    stream = [[0]] * 6 + [[3]]
    fired, _ = _drive(stream, min_gap=5)
    assert fired == [0, 6]


def test_seen_union_prevents_refire_after_gap():
    """A class first observed inside the blocked window never fires later."""
    stream = [[0], [1], [0], [0], [0], [0], [0], [1], [1]]
    fired, _ = _drive(stream, min_gap=4)
    assert fired == [0]  # 1 was absorbed at step 1, stale by step 7


def test_no_novelty_never_fires():
    state = initial_state(3)
    state, first = observe(state, [0, 1])
    assert first
    for _ in range(50):
        state, changed = observe(state, [0, 1])
        assert not changed


def test_min_gap_zero_fires_on_every_novel_class():
    fired, _ = _drive([[0], [1], [1], [2]], min_gap=0)
    assert fired == [0, 1, 3]


def test_counter_resets_only_on_fire():
    state = initial_state(10)
    state, _ = observe(state, [0])
    assert state.steps_since_change == 0
    state, changed = observe(state, [5])  # novel but blocked
    assert not changed
    assert state.steps_since_change == 1


def test_states_are_immutable_values():
    s0 = initial_state(2)
    s1, _ = observe(s0, np.array([1, 2]))
    assert s0.seen_classes == frozenset()
    assert s0.steps_since_change == 2
    assert isinstance(s1, BoundaryState)
    assert s1.seen_classes == frozenset({1, 2})


def test_accepts_array_and_nested_shapes():
    state = initial_state(0)
    state, changed = observe(state, np.array([[1, 2], [3, 1]]))
    assert changed
    assert state.seen_classes == frozenset({1, 2, 3})
