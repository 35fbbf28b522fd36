import pytest

from corpus import CORPUS
from oracles import triples

from fujimi_mc import build_dtmc


def corpus_dtmc(name):
    rows, labels, initial = CORPUS[name]
    return build_dtmc(len(rows), initial, triples(rows), labels)


@pytest.fixture(params=sorted(CORPUS))
def corpus_case(request):
    rows, labels, initial = CORPUS[request.param]
    return request.param, rows, labels, corpus_dtmc(request.param)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    def record(line):
        print(line)
        ACCEPTANCE_LINES.append(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
