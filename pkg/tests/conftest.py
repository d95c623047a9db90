import pytest

from svi_audit import _core


@pytest.fixture(params=sorted(_core.available_backends()))
def backend(request):
    """Each available kernel module in turn."""
    return _core.available_backends()[request.param]


@pytest.fixture
def suite():
    from svi_audit.scenarios import load_scenario_suite

    return load_scenario_suite()


_CRITERIA: dict[int, tuple[str, bool, list[str]]] = {}


class CriterionRecorder:
    """Collects named checks for one acceptance criterion."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.checks: list[tuple[str, bool]] = []

    def check(self, label: str, ok: bool) -> bool:
        self.checks.append((label, bool(ok)))
        return bool(ok)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(ok for _, ok in self.checks)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:>2} {status}: {self.title}"

    def verify(self):
        _CRITERIA[self.number] = (self.line(), self.passed, [f"{'ok ' if ok else 'BAD'} {lab}" for lab, ok in self.checks])
        print(self.line())
        for lab, ok in self.checks:
            print(f"    {'ok ' if ok else 'BAD'} {lab}")
        failed = [lab for lab, ok in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion():
    def make(number: int, title: str) -> CriterionRecorder:
        return CriterionRecorder(number, title)

    return make


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        line, _, details = _CRITERIA[n]
        terminalreporter.write_line(line)
        for d in details:
            terminalreporter.write_line(f"    {d}")
