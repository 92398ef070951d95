import numpy as np
import pytest
from hypothesis import HealthCheck, settings as hypothesis_settings

from background.geometry import flat_geometry
from background.lattice import build_lattice
from background.operator import elliptic_operator
from common import settings
from extension.diagonal import DiagonalExtension
from parametrix.green import exact_green
from parametrix.hadamard import hadamard_kernel
from parametrix.smooth_part import smooth_part

# the autouse cache fixture is function scoped; property tests do not touch the cache
hypothesis_settings.register_profile(
    "lcqft", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
hypothesis_settings.load_profile("lcqft")


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "CACHE_DIR", str(tmp_path / "cache"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def torus2():
    """D = 2 torus, extent 4, m^2 = 1."""
    return flat_geometry(2, 4.0, mass_squared=1.0)


@pytest.fixture(scope="session")
def small_lattice(torus2):
    return build_lattice(torus2, 4)


@pytest.fixture(scope="session")
def small_green(torus2, small_lattice):
    return exact_green(elliptic_operator(small_lattice, torus2), small_lattice)


@pytest.fixture(scope="session")
def lattice8(torus2):
    return build_lattice(torus2, 8)


@pytest.fixture(scope="session")
def operator8(torus2, lattice8):
    return elliptic_operator(lattice8, torus2)


@pytest.fixture(scope="session")
def green8(operator8, lattice8):
    return exact_green(operator8, lattice8)


@pytest.fixture(scope="session")
def hadamard8(torus2, lattice8, green8):
    return hadamard_kernel(torus2, lattice8, 2, green8.ref_length_nu)


@pytest.fixture(scope="session")
def smooth8(green8, hadamard8):
    return smooth_part(green8, hadamard8)


@pytest.fixture(scope="session")
def small_smooth(torus2, small_lattice, small_green):
    # the default shell window holds a single radius at n = 4
    H = hadamard_kernel(torus2, small_lattice, 2, small_green.ref_length_nu)
    return smooth_part(small_green, H, order=1, window=(1.0, 1.5))


@pytest.fixture(scope="session")
def small_extension(small_green, small_smooth):
    return DiagonalExtension.from_parametrix(small_green, small_smooth, 2)
