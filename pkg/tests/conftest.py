import numpy as np
import pytest

from mesoscatter.kernels import PlaneWave
from mesoscatter.polarization import PolarizationPair, sphere_polarization

ACCEPTANCE_LINES = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    """Stores one acceptance line; all lines are printed in the terminal summary."""
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append((number, f"[{status}] criterion {number:>2}: {title} | {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def wave():
    return PlaneWave(1.0, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))


@pytest.fixture
def sphere_pair():
    """Reference case used throughout: sphere with eps = 2 and mu = 1.5."""
    return PolarizationPair(sphere_polarization(2.0), sphere_polarization(1.5), "sphere")


def random_unit(rng, n=None):
    v = rng.standard_normal((3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def oblique_wave(rng, k=1.3):
    theta = random_unit(rng)
    P = np.cross(theta, random_unit(rng))
    P /= np.linalg.norm(P)
    P -= (P @ theta) * theta
    return PlaneWave(k, theta, P)


def experiment_doc(n=3, N=8, c_values=(2.0, 4.0, 8.0), eps=2.0, mu=1.5, **extra):
    """A small but complete experiment configuration document."""
    doc = {
        "wave": {"k": 1.0, "theta": [0.0, 0.0, 1.0], "P": [1.0, 0.0, 0.0]},
        "cluster": {"n_per_side": n, "domain": "cube"},
        "shape": {"shape": "sphere", "eps": eps, "mu": mu},
        "ls": {"N": N},
        "sweep": {"c_r": list(c_values)},
        "directions": "lebedev86",
    }
    doc.update(extra)
    return doc
