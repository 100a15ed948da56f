import time
from contextlib import contextmanager

# one line per acceptance criterion, printed after the run
ACCEPTANCE: list[str] = []


@contextmanager
def criterion(number: int, title: str, budget_s: float | None = None):
    """Time a criterion body and record a PASS/FAIL line; failures still propagate."""
    details: list[str] = []
    start = time.perf_counter()
    try:
        yield details
        elapsed = time.perf_counter() - start
        if budget_s is not None and elapsed > budget_s:
            raise AssertionError(f"runtime {elapsed:.2f} s exceeds {budget_s:g} s")
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        ACCEPTANCE.append(f"criterion {number} [{title}]: FAIL ({elapsed:.2f} s) {exc}".splitlines()[0])
        raise
    limit = f" / {budget_s:g} s" if budget_s is not None else ""
    ACCEPTANCE.append(f"criterion {number} [{title}]: PASS ({elapsed:.2f} s{limit}) {'; '.join(details)}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
