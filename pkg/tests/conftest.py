import numpy as np
import pytest
from hypothesis import strategies as st

from sl2lab.sl2_core import SL2Line

ACCEPTANCE_LINES = []


def sl2_params(rng, n, scale=1.0):
    """n random SL2 parameter rows; d solved from the determinant with |a| >= 0.3."""
    a = rng.uniform(0.3, 1.2, n) * rng.choice([-1, 1], n) * scale
    b, c = rng.uniform(-1, 1, (2, n)) * scale
    d = (1 + b * c) / a
    return np.column_stack([a, b, c, d])


@st.composite
def sl2_lines(draw, bound=1.5):
    a = draw(st.floats(0.3, bound)) * draw(st.sampled_from([-1, 1]))
    b = draw(st.floats(-bound, bound))
    c = draw(st.floats(-bound, bound))
    return SL2Line(a, b, c, (1 + b * c) / a)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
