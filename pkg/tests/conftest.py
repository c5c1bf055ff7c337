import numpy as np
import pytest

from contactmech.config import bundled_config_path, load_config
from contactmech.geometry import ContactChart, ContactSystem


@pytest.fixture(scope="session")
def pz_config():
    return load_config(bundled_config_path("darboux-pz"))


@pytest.fixture(scope="session")
def pz_system(pz_config):
    return pz_config.system()


@pytest.fixture(scope="session")
def pz_symp(pz_config):
    return pz_config.symp_system()


@pytest.fixture(scope="session")
def involutive5():
    return load_config(bundled_config_path("darboux-5d-involutive")).system()


@pytest.fixture(scope="session")
def noninvolutive5():
    return load_config(bundled_config_path("darboux-5d-noninvolutive")).system()


@pytest.fixture(scope="session")
def rotation_system():
    # f0 flow circles the (q, p) plane with period 2*pi from (1, 0, z)
    chart = ContactChart.standard(1)
    return ContactSystem(
        chart,
        ["(q^2 + p^2)/2", "z"],
        {"q": (-3.0, 3.0), "p": (-3.0, 3.0), "z": (0.5, 2.0)},
        positive=["z"],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
