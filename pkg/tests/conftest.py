import pytest

from integro_spectral import presets
from integro_spectral.chareq import DEFAULT_BOX, find_eigenvalues
from integro_spectral.inverse import example2_check, synthetic_target
from integro_spectral.specdata import spectral_data_from_eigenvalues

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def zero():
    return presets.zero_kernel()


@pytest.fixture(scope="session")
def smooth():
    return presets.smooth_1()


@pytest.fixture(scope="session")
def smooth_eigs(smooth):
    return find_eigenvalues(smooth, DEFAULT_BOX)


@pytest.fixture(scope="session")
def smooth_sd(smooth, smooth_eigs):
    return spectral_data_from_eigenvalues(smooth, smooth_eigs)


@pytest.fixture(scope="session")
def k6_target():
    return synthetic_target(presets.TRUTH_K6)


@pytest.fixture(scope="session")
def example2_reports():
    """``(vanishing-R run, control run)`` on the canonical setup."""
    a, R, V, Vt, Vc = presets.example2_setup()
    return example2_check(a, R, V, Vt), example2_check(a, R, V, Vc, control=True)


@pytest.fixture
def record():
    """Append one PASS/FAIL line for the acceptance summary."""
    def _record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
