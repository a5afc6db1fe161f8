import pytest

from commitlm.commits import LineKind
from commitlm.synth import make_binarizer_commit, random_commits
from commitlm.vocab import train_bpe


def commit_texts(records):
    for rec in records:
        yield rec.message
        for f in rec.files:
            yield f.path
            for h in f.hunks:
                for ln in h.lines:
                    yield ln.text + "\n"


@pytest.fixture(scope="session")
def binarizer_commit():
    return make_binarizer_commit()


@pytest.fixture(scope="session")
def synth_commits():
    return random_commits(300, seed=11)


@pytest.fixture(scope="session")
def vocab(synth_commits):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return train_bpe(commit_texts(synth_commits + [make_binarizer_commit()]), 900)


@pytest.fixture()
def added_lines():
    def _added(record):
        return [ln.text for ln in record.changed_lines() if ln.kind is LineKind.ADDED]
    return _added


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
