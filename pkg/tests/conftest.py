import numpy as np
import pytest

from raschmix import dichotomize, filter_extremes, load_verbal_aggression
from raschmix.data import VERBAL_AGGRESSION_ITEMS


@pytest.fixture(scope="session")
def va_raw():
    return load_verbal_aggression()


@pytest.fixture(scope="session")
def va_data(va_raw):
    values, ids = va_raw
    data, report = filter_extremes(dichotomize(values, VERBAL_AGGRESSION_ITEMS, ids))
    return data, report


def enumerate_patterns(m):
    """All 2^m binary vectors as rows."""
    return ((np.arange(2**m)[:, None] >> np.arange(m)) & 1).astype(np.int8)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
