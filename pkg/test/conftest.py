import numpy as np
import pytest

from ecgifoe.fem.context import FemContext
from ecgifoe.fem.timegrid import TimeGrid
from ecgifoe.geometry.mesh import MeshConfig, SurfaceMesh1D, build_torso_mesh

LUNGS = [((-1.7, 1.0), 0.6), ((1.9, 1.3), 0.55)]

SMALL_SETTINGS = {
    "mesh.target_h": 0.5,
    "electrodes.count": 8,
    "time.window": 20.0,
    "time.n_intervals": 10,
    "refine.levels": 3,
    "refine.target_h": 0.8,
    "refine.n_intervals": 4,
}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def surface():
    return SurfaceMesh1D.circle(12, radius=1.0)


@pytest.fixture
def grid():
    return TimeGrid.over(1.0, 8)


@pytest.fixture
def ctx(surface, grid):
    return FemContext(surface, grid)


@pytest.fixture(scope="session")
def torso_config():
    return MeshConfig(outer_radius=3.0, heart_radius=1.0, heart_center=(0.3, 0.0), lung_disks=LUNGS, target_h=0.4)


@pytest.fixture(scope="session")
def torso_mesh(torso_config):
    return build_torso_mesh(torso_config, seed=0)


@pytest.fixture
def config_file(tmp_path):
    """
    Factory writing a small ``key = value`` configuration; keyword arguments override settings.
    """

    def write(name="small.conf", **overrides):
        values = dict(SMALL_SETTINGS)
        values.update({key.replace("__", "."): value for key, value in overrides.items()})
        path = tmp_path / name
        path.write_text("\n".join("{} = {}".format(k, v) for k, v in values.items()) + "\n")
        return str(path)

    return write
