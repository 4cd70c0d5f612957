import numpy as np
import pytest

from ro_norm.utils import (
    DegenerateTriangleError,
    DisconnectedMeshError,
    MeshIndexError,
    MeshParseError,
    TriMesh,
    assemble_operators,
    load_mesh,
    save_mesh,
)
from ro_norm.tests.conftest import rectangle_mesh, refine_mesh


def test_load_mesh(triangle_file):
    mesh = load_mesh(triangle_file)
    assert mesh.n_vertices == 3
    assert mesh.n_triangles == 1
    assert mesh.dim == 2
    np.testing.assert_allclose(mesh.area(), 0.5, atol=1e-12)


def test_save_load_mesh(tmp_path, grid_mesh):
    mesh = load_mesh(save_mesh(grid_mesh, tmp_path / "grid.txt"))
    np.testing.assert_array_equal(mesh.vertices, grid_mesh.vertices)
    np.testing.assert_array_equal(mesh.triangles, grid_mesh.triangles)
    assert mesh.checksum() == grid_mesh.checksum()


def test_square_area(square_mesh):
    np.testing.assert_allclose(square_mesh.area(), 1.0, atol=1e-12)


@pytest.mark.parametrize(
    "text, error",
    [
        ("", MeshParseError),
        ("3 1\n0 0\n1 0\n0 1\n0 1 2\n", MeshParseError),
        ("3 1 2\n0 0\n1 0\n0 1\n", MeshParseError),
        ("3 1 2\n0 0\n1 x\n0 1\n0 1 2\n", MeshParseError),
        ("3 1 4\n0 0\n1 0\n0 1\n0 1 2\n", MeshParseError),
        ("3 1 2\n0 0\n1 0\n0 1\n0 1 7\n", MeshIndexError),
        ("3 1 2\n0 0\n1 0\n2 0\n0 1 2\n", DegenerateTriangleError),
    ],
)
def test_load_mesh_errors(tmp_path, text, error):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(error):
        load_mesh(path)


def test_disconnected_mesh():
    vertices = np.array(
        [[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]], dtype=float
    )
    with pytest.raises(DisconnectedMeshError):
        TriMesh(vertices, np.array([[0, 1, 2], [3, 4, 5]]))


def test_mesh_errors_are_data_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not a mesh\n")
    with pytest.raises(ValueError):
        load_mesh(path)


def test_square_operators(square_mesh):
    L, M = assemble_operators(square_mesh)
    np.testing.assert_allclose(M.sum(), 1.0, atol=1e-12)
    np.testing.assert_allclose(L @ np.ones(4), 0.0, atol=1e-10)
    # right angles at 1 and 3, so the diagonal 0-2 has zero weight
    expected = 0.5 * np.array(
        [
            [2, -1, 0, -1],
            [-1, 2, -1, 0],
            [0, -1, 2, -1],
            [-1, 0, -1, 2],
        ]
    )
    np.testing.assert_allclose(L.toarray(), expected, atol=1e-12)


def test_stiffness_is_symmetric_psd(rng):
    vertices = rectangle_mesh(5, 4).vertices
    vertices = vertices + 0.03 * rng.uniform(-1, 1, vertices.shape)
    mesh = TriMesh(vertices, rectangle_mesh(5, 4).triangles)
    L, M = assemble_operators(mesh)
    dense = L.toarray()
    np.testing.assert_allclose(dense, dense.T, atol=1e-14)
    np.testing.assert_allclose(dense.sum(axis=1), 0.0, atol=1e-10)
    eigvals = np.linalg.eigvalsh(dense / np.abs(dense).max())
    assert eigvals.min() >= -1e-9
    # nullspace spanned by the constant vector
    assert (eigvals < 1e-9).sum() == 1
    np.testing.assert_allclose(M.sum(), mesh.area(), rtol=1e-10)


def test_refinement_keeps_mass(grid_mesh):
    _, M = assemble_operators(grid_mesh)
    _, M_fine = assemble_operators(refine_mesh(grid_mesh))
    np.testing.assert_allclose(M_fine.sum(), M.sum(), atol=1e-10)


def test_surface_mesh_in_3d():
    # two faces of the unit cube, folded along an edge
    vertices = np.array(
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [0, 1, 1]], dtype=float
    )
    triangles = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 5], [0, 5, 4]])
    mesh = TriMesh(vertices, triangles)
    L, M = assemble_operators(mesh)
    assert mesh.dim == 3
    np.testing.assert_allclose(M.sum(), 2.0, atol=1e-12)
    np.testing.assert_allclose(L @ np.ones(6), 0.0, atol=1e-10)


def test_centroid_vertex():
    mesh = rectangle_mesh(3, 3)
    assert mesh.centroid_vertex() == 4
