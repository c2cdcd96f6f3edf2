import numpy as np
import pytest

from shadowloop.oracle import SceneSpec, Sphere, render_scene

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def single_sphere(light, radius=60.0, size=256, gap=0.0):
    plane = float(size)
    spec = SceneSpec(
        spheres=(Sphere((size / 2, size / 2, plane - radius - gap), radius),),
        plane_depth=plane,
        light=tuple(light),
        resolution=(size, size),
    )
    return spec, render_scene(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def lit_sphere():
    """Single sphere lit from the upper left, slightly toward the scene."""
    light = np.array([0.5, 0.3, 0.6])
    return single_sphere(light / np.linalg.norm(light))
