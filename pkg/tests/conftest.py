import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sapeo.core import ConfidenceBox  # noqa: E402


class ExactStub:
    """Surrogate returning the true values with a fixed radius."""

    def __init__(self, fn, radius: float = 0.0):
        self.fn = fn
        self.radius = radius
        self.calls = 0

    def predict_box(self, x, archive_x, archive_f):
        self.calls += 1
        v = np.asarray(self.fn(x), dtype=float)
        return ConfidenceBox(v, np.full_like(v, self.radius))


class CountingFn:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0
        self.seen = []

    def __call__(self, x):
        self.calls += 1
        self.seen.append(np.array(x).tobytes())
        return self.fn(x)


class ListRecorder:
    def __init__(self):
        self.events = []

    def on_evaluation(self, x, values):
        self.events.append(("eval", np.array(x), np.array(values)))

    def on_recommend(self, x):
        self.events.append(("rec", np.array(x), None))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Keep one verdict line per acceptance criterion for the session summary."""
    CRITERIA[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
