import numpy as np
import pytest

from ro_norm.utils import TriMesh


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run desk-scale experiments"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def rectangle_mesh(nx, ny, width=1.0, height=1.0):
    """Structured triangulation of ``[0, width] x [0, height]``."""
    xs = np.linspace(0.0, width, nx)
    ys = np.linspace(0.0, height, ny)
    vertices = np.array([(x, y) for y in ys for x in xs])
    triangles = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            triangles.append((a, a + 1, a + nx + 1))
            triangles.append((a, a + nx + 1, a + nx))
    return TriMesh(vertices, np.array(triangles))


def refine_mesh(mesh):
    """Split every triangle into four at the edge midpoints."""
    vertices = [v for v in mesh.vertices]
    midpoints = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoints:
            midpoints[key] = len(vertices)
            vertices.append(0.5 * (mesh.vertices[i] + mesh.vertices[j]))
        return midpoints[key]

    triangles = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        triangles += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return TriMesh(np.array(vertices), np.array(triangles))


@pytest.fixture
def triangle_mesh():
    return TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


@pytest.fixture
def square_mesh():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return TriMesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture
def grid_mesh():
    return rectangle_mesh(6, 5)


@pytest.fixture
def rng():
    return np.random.RandomState(0)


TRIANGLE_TXT = """# single right triangle
3 1 2
0 0
1 0
0 1
0 1 2
"""


@pytest.fixture
def triangle_file(tmp_path):
    path = tmp_path / "triangle.txt"
    path.write_text(TRIANGLE_TXT)
    return path
