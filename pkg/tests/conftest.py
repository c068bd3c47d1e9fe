"""Acceptance bookkeeping: one pass/fail line per criterion in the terminal summary."""

import pytest

_RESULTS = {}


class Checks:
    """Collects named sub-checks so one failing clause does not hide the others."""

    def __init__(self):
        self.items = []

    def __call__(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))
        return bool(ok)

    def verify(self):
        failed = [f"{n} ({d})" if d else n for n, ok, d in self.items if not ok]
        assert not failed, "failed: " + "; ".join(failed)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def checks(request):
    c = Checks()
    request.node.checks = c
    return c


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _RESULTS[number] = (title, rep.passed, getattr(item, "checks", Checks()).items)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, items = _RESULTS[number]
        tr.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}")
        for name, ok, detail in items:
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
