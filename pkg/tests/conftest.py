import numpy as np
import pytest
from hypothesis import settings

from vinegraph.masks import BoundingBox
from vinegraph.plant import new_item

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")


def rect(width, height, x0, y0, x1, y1):
    """Inclusive filled rectangle on a width x height canvas."""
    m = np.zeros((height, width), dtype=bool)
    m[y0 : y1 + 1, x0 : x1 + 1] = True
    return m


def item(id, organ, mask):
    return new_item(id, organ, None, 1.0, mask)


def node(id, box, size):
    return new_item(id, "node", BoundingBox(*box), 1.0, None, size=size)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
