import pytest

from onebm.synthetic import chain_database, materialize, toy_train_database


@pytest.fixture
def toy_db():
    return materialize(*toy_train_database())


@pytest.fixture
def chain_db():
    return materialize(*chain_database())


@pytest.fixture
def toy_dir(tmp_path):
    from onebm.synthetic import write_database

    return write_database(*toy_train_database(), tmp_path / "toy")


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, title)`` returns a ``detail`` setter."""
    state = {}

    def start(number, title):
        state.update(number=number, title=title, detail="")

        def detail(text):
            state["detail"] = text

        return detail

    yield start
    if state:
        rep = getattr(request.node, "rep_call", None)
        passed = rep is not None and rep.passed
        ACCEPTANCE[state["number"]] = (passed, state["title"], state["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, title, detail = ACCEPTANCE[number]
        mark = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{mark}] {number:>2}. {title}" + (f"  ({detail})" if detail else ""))
