import importlib.util
import sys
from pathlib import Path

import pytest

from lfqa.llm import ScriptedClient
from lfqa.retriever import BM25Retriever

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"


def load_script(name: str):
    """Import a module from scripts/ by file name."""
    path = ROOT / "scripts" / f"{name}.py"
    spec = importlib.util.spec_from_file_location(f"scripts_{name}", path)
    mod = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = mod
    spec.loader.exec_module(mod)
    return mod


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return FIXTURES / "corpus.jsonl"


@pytest.fixture
def retriever(corpus_path) -> BM25Retriever:
    return BM25Retriever.from_corpus(corpus_path)


@pytest.fixture
def scripted():
    def load(name: str) -> ScriptedClient:
        return ScriptedClient.from_file(FIXTURES / f"{name}.fixtures.jsonl")
    return load


@pytest.fixture(scope="session")
def builder():
    return load_script("build_fixtures")


# -- acceptance reporting ----------------------------------------------------------------

_criteria: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    if rep.when == "call" or rep.failed:
        prev_ok = _criteria.get(n, (title, True))[1]
        _criteria[n] = (title, prev_ok and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}")
