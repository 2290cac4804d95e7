import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

import mpir  # noqa: E402

TINY = os.path.join(os.path.dirname(mpir.__file__), "data", "tiny.conll")


@pytest.fixture
def tiny_path():
    return TINY


def pytest_terminal_summary(terminalreporter):
    import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda x: int(x.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
