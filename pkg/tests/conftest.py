import numpy as np
import pytest
from importlib import resources

from rdstab.cli import bundled_scenario_path
from rdstab.config import build_basis, build_plant, load_scenario


def load_bundled(name):
    with resources.as_file(bundled_scenario_path(name)) as path:
        return load_scenario(path)


@pytest.fixture(scope="session")
def dirichlet_setup():
    cfg = load_bundled("dirichlet")
    plant = build_plant(cfg)
    basis = build_basis(plant, 101)
    return cfg, plant, basis


@pytest.fixture(scope="session")
def neumann_setup():
    cfg = load_bundled("neumann")
    plant = build_plant(cfg)
    basis = build_basis(plant, 101)
    return cfg, plant, basis


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
