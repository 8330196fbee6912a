import warnings

import pytest

from polyradial import PenaltySpec, ShootingConfig, cross_validate, shoot_delayed, shoot_immediate
from polyradial.solvers import Branch

GENERIC = PenaltySpec.smooth_step(5.0, 0.5)
DELAYED = (PenaltySpec.delayed(5.0, 0.5, 0.1), PenaltySpec.delayed(2.0, 1.0, 0.4))

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def generic_spec():
    return GENERIC


@pytest.fixture(scope="session")
def generic_shot():
    return shoot_immediate(GENERIC, ShootingConfig(2))


@pytest.fixture(scope="session")
def cross():
    return cross_validate(GENERIC, 2, n=2048)


@pytest.fixture(scope="session")
def delayed_shots():
    out = []
    for spec in DELAYED:
        for M in (2, 3):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                out.append((spec, shoot_delayed(spec, ShootingConfig(M, branch=Branch.DELAYED))))
    return out


@pytest.fixture(scope="session")
def delayed_seeded():
    """Seeded shooting under the delayed penalty: no pre-threshold structure is assumed."""
    return [(spec, shoot_immediate(spec, ShootingConfig(M))) for spec in DELAYED for M in (2, 3)]
