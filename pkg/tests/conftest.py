import pytest

_OUTCOMES: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record a criterion verdict: criterion(k, ok, detail)."""

    def record(k: int, ok: bool, detail: str) -> bool:
        _OUTCOMES[k] = (bool(ok), detail)
        print(f"criterion {k:02d} {'PASS' if ok else 'FAIL'}: {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_OUTCOMES):
        ok, detail = _OUTCOMES[k]
        terminalreporter.write_line(f"criterion {k:02d} {'PASS' if ok else 'FAIL'}: {detail}")
