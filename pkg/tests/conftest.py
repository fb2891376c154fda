import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion.

    The test sets ``rec["detail"]`` as it goes; the line is written whether the
    test passes or fails.
    """
    rec = {"detail": ""}
    yield rec
    call = getattr(request.node, "rep_call", None)
    ok = call is not None and call.passed
    name = request.node.name.removeprefix("test_")
    line = f"{'PASS' if ok else 'FAIL'}  {name}  {rec['detail']}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.hookimpl(wrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    if rep.when == "call":
        item.rep_call = rep
    return rep
