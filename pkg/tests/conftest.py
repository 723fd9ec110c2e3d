import pytest

from weakrect.cli import main


@pytest.fixture(scope="session")
def synthetic_sequence(tmp_path_factory):
    """The default synthetic sequence, rendered once per test session."""
    out = tmp_path_factory.mktemp("seq") / "room"
    assert main(["synth", "--output", str(out)]) == 0
    return out


@pytest.fixture(scope="session")
def paired_sequence(synthetic_sequence, tmp_path_factory):
    """Pairing output (manifest directory) for the default synthetic sequence."""
    out = tmp_path_factory.mktemp("pairs")
    assert main(["pair", str(synthetic_sequence), "--output", str(out)]) == 0
    return out


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
