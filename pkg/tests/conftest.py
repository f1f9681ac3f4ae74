import numpy as np
import pytest

from pomdp_lstar.io import fixture_dir, load_fixture, load_supervisor
from pomdp_lstar.supervisor import Alphabet

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def example():
    """The bundled five-state example and its specification."""
    return load_fixture()


@pytest.fixture(scope="session")
def pomdp(example):
    return example[0]


@pytest.fixture(scope="session")
def spec(example):
    return example[1]


@pytest.fixture(scope="session")
def alphabet(pomdp):
    return Alphabet.of(pomdp)


@pytest.fixture(scope="session")
def fixtures_path():
    return fixture_dir()


@pytest.fixture(scope="session")
def figure(fixtures_path):
    """Load a transcribed supervisor figure by name (``f_min``, ``f1`` ...)."""
    def load(name):
        return load_supervisor(fixtures_path / f"{name}.json")
    return load


@pytest.fixture
def strings(alphabet):
    """Parse digit-coded strings: ``strings("11", "14")`` -> set of symbol tuples."""
    def parse(*texts):
        return {alphabet.parse(t) for t in texts}
    return parse


@pytest.fixture(scope="session")
def fail_mask(pomdp):
    return np.array(["fail" in lab for lab in pomdp.labels])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
