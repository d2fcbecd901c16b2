import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "numerics",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("numerics")

G = 1.0 / math.sqrt(math.pi)  # pi g^2 = 1


@pytest.fixture
def p_grid():
    return np.linspace(-25.0, 25.0, 1000)


def shell_grid(n=20, half=3.0, E0=0.0):
    """Square (E, Delta) grid on the energy shell with a skewed DeltaPrime."""
    from chiral_smatrix import TwoPhotonKinematics

    E = E0 + np.linspace(-2 * half, 2 * half, n)
    D = np.linspace(-half, half, n)
    EE, DD = np.meshgrid(E, D, indexing="ij")
    return TwoPhotonKinematics.from_shell(EE, DD, 0.37 * DD + 0.1)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
