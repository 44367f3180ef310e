import numpy as np
import pytest

from feasicap.cli import bundled_urdf
from feasicap.kinematics import load_urdf


def planar_urdf(l1: float = 1.0, l2: float = 1.0, vel: float = 1.0) -> str:
    return f"""
<robot name="planar">
  <link name="base_link"/><link name="link1"/><link name="link2"/><link name="tool"/>
  <joint name="j1" type="revolute">
    <parent link="base_link"/><child link="link1"/>
    <origin xyz="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-3.141592653589793" upper="3.141592653589793" velocity="{vel}" effort="10"/>
  </joint>
  <joint name="j2" type="revolute">
    <parent link="link1"/><child link="link2"/>
    <origin xyz="{l1} 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-3.141592653589793" upper="3.141592653589793" velocity="{vel}" effort="10"/>
  </joint>
  <joint name="tool_fixed" type="fixed">
    <parent link="link2"/><child link="tool"/><origin xyz="{l2} 0 0"/>
  </joint>
</robot>
"""


@pytest.fixture(scope="session")
def seven_dof():
    return load_urdf(bundled_urdf("seven_dof_arm"))


@pytest.fixture(scope="session")
def planar():
    return load_urdf(planar_urdf())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_in_limit_q(model, rng, margin: float = 0.05):
    span = model.upper - model.lower
    return model.lower + span * (margin + (1 - 2 * margin) * rng.random(model.dof))


def smooth_q_path(model, rng, n: int, step: float = 0.02):
    """Random joint-space walk with bounded per-frame displacement."""
    q = random_in_limit_q(model, rng)
    path = [q.copy()]
    drift = rng.standard_normal(model.dof)
    for _ in range(n - 1):
        drift = 0.9 * drift + 0.45 * rng.standard_normal(model.dof)
        nrm = np.linalg.norm(drift)
        if nrm > 1e-12:
            q = model.clamp(q + step * drift / nrm * model.dof**0.5)
        path.append(q.copy())
    return path
