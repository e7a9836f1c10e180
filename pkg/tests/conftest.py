import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


@pytest.fixture
def criterion(request):
    """Record the verdict of one acceptance criterion.

    Usage: ``criterion(n, title, ok, detail)``; the summary at the end of
    the run prints one PASS/FAIL line per criterion.
    """
    store = request.config.stash[_VERDICTS]

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        store[number] = (title, bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        title, ok, detail = store[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:2d}. {title}: {detail}")
