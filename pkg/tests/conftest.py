"""Shared fixtures: a few standard geometries and operator workspaces.

Session-scoped because meshes and operator workspaces are immutable; building
them once keeps the suite fast.
"""

import numpy as np
import pytest

from conekit import build_mesh, build_profile
from conekit.operators import ModeOperators


@pytest.fixture(scope="session")
def sphere_mesh():
    """Unit sphere, uniform M=256 (the spectrum-oracle resolution)."""
    return build_mesh(build_profile("sphere", radius=1.0), 256, 1.0)


@pytest.fixture(scope="session")
def sphere_ops(sphere_mesh):
    return ModeOperators(sphere_mesh, 8)


@pytest.fixture(scope="session")
def small_sphere_ops():
    """Unit sphere at modest resolution for dynamics tests."""
    mesh = build_mesh(build_profile("sphere", radius=1.0), 96, 1.0)
    return ModeOperators(mesh, 8)


@pytest.fixture(scope="session")
def cone_ops():
    """Capped cone with tip slope 1/2, uniform mesh, for dynamics tests."""
    mesh = build_mesh(build_profile("cone_capped", c="1/2", length=2.0), 96, 1.0)
    return ModeOperators(mesh, 8)


@pytest.fixture(scope="session")
def graded_cone_ops():
    """Capped cone on a deeply tip-graded mesh, for elliptic/tip work."""
    mesh = build_mesh(build_profile("cone_capped", c=1, length=2.0), 512, 0.8)
    return ModeOperators(mesh, 4)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260815)
