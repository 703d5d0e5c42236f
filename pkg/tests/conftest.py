import mpmath
import pytest

from twistbad.dioph_quality import SystemMatrix, Weights


@pytest.fixture(autouse=True)
def _fresh_precision():
    # every test starts from the library default
    mpmath.mp.dps = 50
    yield
    mpmath.mp.dps = 50


@pytest.fixture
def golden():
    return SystemMatrix.parse("phi"), Weights.parse("1")


@pytest.fixture
def root23():
    return SystemMatrix.parse("sqrt2;sqrt3"), Weights.parse("2/3,1/3")


@pytest.fixture
def report(request):
    """Write a line to the terminal even when output is captured."""
    term = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(line: str) -> None:
        if term is not None:
            term.write_line(line)
        else:
            print(line)

    return emit
