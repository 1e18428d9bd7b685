import pytest

_CRITERIA: list[tuple[int, str, bool, str]] = []


def note_criterion(num: int, name: str, ok: bool, detail: str = "") -> None:
    """Record an acceptance-criterion outcome and print its one-line verdict."""
    _CRITERIA.append((num, name, ok, detail))
    verdict = "PASS" if ok else "FAIL"
    line = f"CRITERION {num:2d} {verdict}  {name}"
    if detail:
        line += f"  [{detail}]"
    print(line, flush=True)


@pytest.fixture(scope="session")
def criterion():
    return note_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num, name, ok, detail in sorted(_CRITERIA):
        verdict = "PASS" if ok else "FAIL"
        line = f"  {num:2d} {verdict}  {name}"
        if detail:
            line += f"  [{detail}]"
        tr.write_line(line)
    failed = sum(1 for _, _, ok, _ in _CRITERIA if not ok)
    tr.write_line(f"  {len(_CRITERIA) - failed}/{len(_CRITERIA)} criteria pass")
