import numpy as np
import pytest

from steklov_perturb.sphere_basis import ZonalFn

_ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_log():
    """Append ``(criterion, passed, detail)`` lines; echoed in the terminal summary."""

    def record(criterion: str, passed: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def zonal(d, **coeffs):
    """``zonal(3, l2=1.0)`` -> ``Z_2`` on S^3."""
    return ZonalFn.from_sparse(d, {int(k[1:]): v for k, v in coeffs.items()})
