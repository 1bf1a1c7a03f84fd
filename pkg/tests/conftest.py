import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from instaradar.geom import CameraIntrinsics, Pose


def random_pose(rng, scale=10.0):
    q = rng.normal(size=4)
    return Pose(q / np.linalg.norm(q), rng.uniform(-scale, scale, size=3))


def matrix_oracle(p: Pose) -> np.ndarray:
    """4x4 homogeneous matrix built through scipy, independent of Pose internals."""
    w, x, y, z = p.rotation
    m = np.eye(4)
    m[:3, :3] = Rotation.from_quat([x, y, z, w]).as_matrix()
    m[:3, 3] = p.translation
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cam():
    return CameraIntrinsics(fx=560.0, fy=560.0, cx=352.0, cy=128.0, width=704, height=256)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
