import math

import pytest

from castline.actions import Workspace, feasible_actions, grid_sample_actions
from castline.cablesim import SimParams, rollout

deg = math.radians
REF_BOUNDS = [(deg(1), deg(80)), (deg(20), deg(80)), (0.21, 0.77), (deg(30), deg(60)), (2.0, 2.5)]
TRUTH = SimParams(bend_stiffness=0.1, joint_damping=1.0, cable_mass=0.05, endpoint_mass=0.02,
                  mu_d=0.2, mu_s=0.25, drag=0.05)


@pytest.fixture(scope="session")
def truth():
    return TRUTH


@pytest.fixture(scope="session")
def ref_grid():
    return grid_sample_actions(REF_BOUNDS, (5, 5, 5, 4, 2))


@pytest.fixture(scope="session")
def feasible_ref(ref_grid):
    return feasible_actions(ref_grid, 0.6, Workspace())


@pytest.fixture(scope="session")
def ref_records(feasible_ref, truth):
    """Every feasible reference-grid action rolled out under the truth parameters."""
    return [rollout(a, truth, 0.6, Workspace()) for a in feasible_ref]


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, title, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})")
