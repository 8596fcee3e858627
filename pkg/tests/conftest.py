import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# acceptance verdicts, filled by tests/test_acceptance.py through ``verdict``
ACCEPTANCE: list[tuple[str, bool, str]] = []


def verdict(label: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE.append((label, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE, key=lambda v: _key(v[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")


def _key(label):
    head = label.split()[0]
    num = "".join(c for c in head if c.isdigit())
    return (int(num) if num else 99, head)
