import pytest

from diagmeta.data import MetaDataset, StudyRecord, load_delirium


@pytest.fixture(scope="session")
def delirium():
    return load_delirium()


@pytest.fixture
def toy():
    """Three small studies with a zero cell."""
    return MetaDataset((
        StudyRecord("a", 3, 1, 2, 4),
        StudyRecord("b", 5, 0, 1, 3),
        StudyRecord("c", 2, 2, 2, 5),
    ))


@pytest.fixture(scope="session")
def delirium_fit(delirium):
    """Memoized default-option fits of the bundled data, keyed by (model, link)."""
    from diagmeta.inference import fit_model

    cache = {}

    def get(model, link="logit"):
        if (model, link) not in cache:
            cache[model, link] = fit_model(delirium, model, link)
        return cache[model, link]

    return get


_ACCEPTANCE = []


@pytest.fixture
def criterion(capsys):
    """Record one acceptance line: ``record(name, passed, detail)``."""

    def record(name, passed, detail=""):
        line = f"ACCEPTANCE {'PASS' if passed else 'FAIL'} | {name} | {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
