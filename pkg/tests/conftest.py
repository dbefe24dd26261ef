from __future__ import annotations

import pytest

# (criterion id, title, passed, detail) recorded by the acceptance suite
ACCEPTANCE: list[tuple[str, str, bool, str]] = []


@pytest.fixture
def criterion():
    def record(cid: str, title: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE.append((cid, title, ok, detail))
        assert ok, f"{cid} {title}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split("-")[1])):
        line = f"{'PASS' if ok else 'FAIL'}  {cid}  {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
