"""Shared fixtures and the acceptance-line reporter.

Acceptance tests record one human-readable pass/fail line each; the lines are
echoed in a dedicated section after the run so the behavioral gate is visible
without digging through -v output.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

from streamkd import datasets
from streamkd.datasets import ArrayDataset


def pytest_configure(config):
    config._criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def note(request):
    """Record (and print) one `criterion N PASS/FAIL: detail` line."""

    def _note(idx: int, ok: bool, detail: str) -> None:
        line = f"criterion {idx:>2} {'PASS' if ok else 'FAIL'}: {detail}"
        request.config._criterion_lines.append((idx, line))
        print(line)

    return _note


def make_tiny_dataset(n_classes: int = 4, per_class: int = 20, size: int = 10,
                      name: str = "tiny") -> ArrayDataset:
    """A few-step dataset for loop plumbing tests; content barely matters."""
    return datasets.synthetic_dataset(n_classes=n_classes, train_per_class=per_class,
                                      test_per_class=8, size=size, noise=0.1,
                                      name=name)


@pytest.fixture
def tiny_registry(monkeypatch):
    """Expose the tiny dataset under the id 'tiny' for config-driven runs."""
    ds = make_tiny_dataset()
    monkeypatch.setitem(datasets._BUILTIN, "tiny", lambda: ds)
    return ds


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    torch.set_num_threads(1)
