import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``.

    ``passed=None`` marks a criterion that is documented rather than run.
    """

    def record(number: int, passed, detail: str) -> None:
        passed = passed if passed is None else bool(passed)
        _CRITERIA[number] = (passed, detail)
        print(_line(number, passed, detail))

    return record


def _line(number, passed, detail) -> str:
    status = "N/A " if passed is None else ("PASS" if passed else "FAIL")
    return f"criterion {number:2d}: {status}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_line(n, *_CRITERIA[n]))


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    from mostdet.nms import warmup

    warmup()
