import numpy as np
import pytest

from exo_observer.canonical import benchmark_psi_ab_jacobian
from exo_observer.config import SimConfig, load_bundled

THETA0 = np.array([1.0, 1.0, -1.0])


def admissible_theta(rng, size=100):
    out = []
    while len(out) < size:
        th = rng.uniform(0.5, 2.0, 3) * rng.choice([-1.0, 1.0], 3)
        if abs(np.linalg.det(benchmark_psi_ab_jacobian(th))) > 1e-2:
            out.append(th)
    return np.array(out)


@pytest.fixture(scope="session")
def rng_thetas():
    return admissible_theta(np.random.default_rng(1234))


@pytest.fixture(scope="session")
def bench60():
    """Truth-mode benchmark run, normalized mode, h = 1e-4, t_end = 60."""
    from exo_observer.simulation import run

    return run(SimConfig(t_end=60.0, h=1e-4, truth=True, mode="normalized"))


@pytest.fixture(scope="session")
def bench300():
    """Full bundled-config run (all benchmark constants, normalized mode)."""
    from exo_observer.simulation import run

    cfg = load_bundled()
    assert cfg.mode == "normalized" and cfg.t_end == 300.0
    return run(cfg)
