import math

import pytest

from sphvp.field import cf_constant
from sphvp.phase_space import indicator_ball
from sphvp.solver import SolverConfig, delta0
from sphvp.steady_states import PolytropeSpec, build_polytrope

BALL_VOLUME = (4.0 * math.pi / 3.0) ** 2

# coarse settings for unit tests; the acceptance suite runs at the defaults
FAST = SolverConfig(resolution=16, radius_nodes=128, steps_per_slab=16)


@pytest.fixture(scope="session")
def ball():
    return indicator_ball()


@pytest.fixture(scope="session")
def ball_delta0(ball):
    return delta0(ball.P0, cf_constant(ball))


@pytest.fixture(scope="session")
def polytrope():
    return build_polytrope(PolytropeSpec(1, 1.0))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number: int, name: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (name, bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}")
