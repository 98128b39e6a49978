import numpy as np
import pytest

from springhop.controllers import SlipHopController, stepping_targeting
from springhop.energy import EnergyControllerConfig
from springhop.hybrid import IntegratorOptions, simulate_hops
from springhop.robot import RobotParams
from springhop.slip import SlipModel, SlipParams, apex_state
from springhop.stepping import GaitContext, find_periodic_orbit

# Reference scenario: 2.5 kg, 4848.5 N/m spring, thrust window derived from
# the 1.1 m apex / 10.2 J energy level (floor 15.2523 N, cap 22 N).
FT_MIN = 15.2523
FT_MAX = 22.0


@pytest.fixture(scope="session")
def slip_params():
    return SlipParams()


@pytest.fixture(scope="session")
def ctrl_05(slip_params):
    return EnergyControllerConfig.for_apex(
        m=slip_params.m, g=slip_params.g, ft_min=FT_MIN, ft_max=FT_MAX,
        apex_height=0.5)


@pytest.fixture(scope="session")
def ctrl_11(slip_params):
    return EnergyControllerConfig.for_apex(
        m=slip_params.m, g=slip_params.g, ft_min=FT_MIN, ft_max=FT_MAX,
        apex_height=1.1)


@pytest.fixture(scope="session")
def gait_05(slip_params, ctrl_05):
    return find_periodic_orbit(0.5, 0.5, slip_params, ctrl_05)


@pytest.fixture(scope="session")
def ctx_05(slip_params, ctrl_05, gait_05):
    return GaitContext(params=slip_params, ctrl=ctrl_05,
                       apex_height=gait_05.apex_height)


@pytest.fixture(scope="session")
def robot_params():
    return RobotParams(offset=0.22)


@pytest.fixture(scope="session")
def hop_slip_traj(slip_params, ctrl_05, gait_05):
    """Closed-loop stepping run used by several invariants."""
    model = SlipModel(slip_params)
    controller = SlipHopController(ctrl_05, stepping_targeting(gait_05),
                                   slip_params.r0)
    state = apex_state(slip_params, gait_05.apex_height, gait_05.xdot_star)
    traj = simulate_hops(model, state, controller, 12, t_max=20.0,
                         opts=IntegratorOptions())
    assert traj.termination == "completed"
    return traj
