import numpy as np
import pytest

from getup2d.engine import SimConfig
from getup2d.model import RobotModel, default_robot
from getup2d.terrain import make_terrain


@pytest.fixture(scope="session")
def robot():
    return default_robot()


@pytest.fixture(scope="session")
def flat():
    return make_terrain("flat")


@pytest.fixture()
def cfg():
    return SimConfig()


@pytest.fixture(scope="session")
def pendulum():
    """Two-link fixture with round-number PD gains for formula tests."""
    spec = {
        "name": "pendulum",
        "links": [
            {"name": "base", "mass": 1.0, "inertia": 0.1, "length": 0.1,
             "com": [0.0, 0.0],
             "collision_points_coarse": [[0.0, 0.0], [0.1, 0.0]],
             "collision_points_full": [[0.0, 0.0], [0.1, 0.0]]},
            {"name": "rod", "mass": 0.5, "inertia": 0.01, "length": 0.3,
             "com": [0.0, -0.15],
             "collision_points_coarse": [[0.0, 0.0], [0.0, -0.3]],
             "collision_points_full": [[0.0, 0.0], [0.0, -0.3]]},
        ],
        "joints": [
            {"name": "pivot", "parent": "base", "child": "rod",
             "anchor": [0.0, 0.0], "q_min": -3.0, "q_max": 3.0,
             "tau_max": 8.8, "kp": 50.0, "kd": 1.0, "side": "center",
             "axis": "pitch"},
        ],
        "head": {"link": "base", "offset": [0.0, 0.1]},
        "feet": ["rod", "rod"],
        "standing_head_height": 0.1,
        "default_dof": [0.0],
        "canonical_poses": {
            "standing": {"q": [0.0], "base_pos": [0.0, 0.0], "base_pitch": 0.0},
        },
    }
    return RobotModel.from_dict(spec)
