import pytest

from taxpolicy.domains import builtin_domain
from taxpolicy.policy import TrainingInstance
from taxpolicy.pstrips import ground, parse_state


@pytest.fixture(scope="session")
def bw1():
    return builtin_domain("bw1")


@pytest.fixture
def q1(bw1):
    # b sits on a; the goal only asks for a to be clear
    return parse_state("(state (objects a b) (facts (on b a) (on-table a) (clear b) (arm-empty) (gclear a)))", bw1)


@pytest.fixture
def q2(bw1):
    return parse_state(
        "(state (objects a b) (facts (on-table a) (on-table b) (clear a) (clear b) (arm-empty) (gon b a)))", bw1
    )


@pytest.fixture
def micro(q1, q2):
    return [
        TrainingInstance(q1, {ground(q1, "unstack", ["b"])}),
        TrainingInstance(q2, {ground(q2, "pick-up", ["b"])}),
    ]


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
