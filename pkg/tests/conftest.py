import numpy as np
import pytest
from hypothesis import strategies as st

from pickroute.warehouse import Instance, Location, WarehouseGeometry


def make_instance(points, n_aisles=None, **geometry):
    """Instance from (aisle, y) pairs on the default geometry."""
    n = n_aisles or max(a for a, _ in points)
    g = WarehouseGeometry(n, **geometry)
    return Instance(g, tuple(Location(a, y) for a, y in points))


@st.composite
def small_instances(draw, max_aisles=4, max_items=8, max_slots=12):
    n = draw(st.integers(1, max_aisles))
    slots = draw(st.integers(1, max_slots))
    pitch = draw(st.sampled_from([1, 2, 5]))
    cells = draw(
        st.lists(
            st.tuples(st.integers(1, n), st.integers(1, slots)),
            min_size=1,
            max_size=min(max_items, n * slots),
            unique=True,
        )
    )
    g = WarehouseGeometry(n, slots_per_aisle=slots, aisle_pitch=pitch)
    return Instance(g, tuple(Location(a, g.slot_y(s)) for a, s in cells))


@pytest.fixture
def two_aisle():
    return make_instance([(1, 10), (2, 10)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion for the run summary."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
