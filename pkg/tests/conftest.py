import pytest

ACCEPTANCE = {}
_TITLES = {
    1: "filter matches rule-replay oracle",
    2: "depth band algebra",
    3: "rigid alignment recovery",
    4: "metric correctness",
    5: "association oracle",
    6: "end-to-end filter benefit",
    7: "no-op without dynamic landmarks",
    8: "export / re-ingest round trip",
    9: "output contracts",
}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok

    return record


_collected = []


def pytest_collection_modifyitems(items):
    _collected[:] = [item for item in items if item.module.__name__ == "test_acceptance"]


def pytest_terminal_summary(terminalreporter):
    if not _collected:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in _TITLES.items():
        ok, detail = ACCEPTANCE.get(n, (False, "no verdict recorded (test errored or was skipped)"))
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
