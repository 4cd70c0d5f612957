import numpy as np
import pytest
import scipy.linalg
from scipy import sparse

from ro_norm.utils import (
    ConfigError,
    ShapeError,
    assemble_operators,
    compute_lbo_basis,
    fourier_time_basis,
    load_basis,
    project,
    reconstruct,
    save_basis,
)
from ro_norm.tests.conftest import rectangle_mesh


def _chain_operators(n):
    """Stiffness and lumped mass of linear elements on a uniform [0, 1] chain."""
    h = 1.0 / (n - 1)
    main = np.full(n, 2.0 / h)
    main[[0, -1]] = 1.0 / h
    L = sparse.diags([main, np.full(n - 1, -1.0 / h), np.full(n - 1, -1.0 / h)], [0, -1, 1])
    M = np.full(n, h)
    M[[0, -1]] = h / 2
    return L.tocsr(), M


def _first_nonzero_positive(vectors):
    for column in vectors.T:
        first = column[np.abs(column) > 1e-10][0]
        assert first > 0


def test_lbo_constant_mode(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 1)
    assert basis.values[0] <= 1e-9
    phi = basis.vectors[:, 0]
    np.testing.assert_allclose(phi, phi[0], atol=1e-10)
    np.testing.assert_allclose(phi[0] ** 2 * M.sum(), 1.0, atol=1e-10)


def test_lbo_basis_properties(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 12, grid_mesh.checksum())
    assert basis.kind == "lbo"
    assert basis.k == 12
    assert np.all(np.diff(basis.values) >= -1e-12)
    np.testing.assert_allclose(basis.gram(), np.eye(12), atol=1e-8)
    _first_nonzero_positive(basis.vectors)
    residual = L @ basis.vectors - M[:, None] * basis.vectors * basis.values
    assert np.all(np.abs(residual).max(axis=0) <= 1e-8 * (1 + basis.values))


def test_lbo_chain_eigenvalue():
    L, M = _chain_operators(101)
    basis = compute_lbo_basis(L, M, 2)
    np.testing.assert_allclose(basis.values[1], np.pi ** 2, rtol=0.02)


def test_lbo_rectangle_eigenvalue():
    # Neumann spectrum of [0, 2] x [0, 1]: 0, (pi/2)^2, pi^2, ...
    L, M = assemble_operators(rectangle_mesh(41, 21, width=2.0))
    basis = compute_lbo_basis(L, M, 3)
    np.testing.assert_allclose(basis.values[1], (np.pi / 2) ** 2, rtol=0.02)
    np.testing.assert_allclose(basis.values[2], np.pi ** 2, rtol=0.02)


def test_lbo_k_out_of_range(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    with pytest.raises(ConfigError):
        compute_lbo_basis(L, M, 0)
    with pytest.raises(ConfigError):
        compute_lbo_basis(L, M, grid_mesh.n_vertices + 1)


def test_lbo_is_deterministic(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    first = compute_lbo_basis(L, M, 10)
    second = compute_lbo_basis(L, M, 10)
    np.testing.assert_array_equal(first.vectors, second.vectors)


def test_fourier_basis():
    basis = fourier_time_basis(100, 100)
    np.testing.assert_allclose(basis.gram(), np.eye(100), atol=1e-10)
    np.testing.assert_allclose(basis.vectors[:, 0], 1.0)
    assert basis.values[0] == 0.0
    assert np.all(np.diff(basis.values) >= 0)
    _first_nonzero_positive(basis.vectors)


def test_fourier_values_scale_with_duration():
    short = fourier_time_basis(16, 5, duration=1.0)
    long = fourier_time_basis(16, 5, duration=2.0)
    np.testing.assert_allclose(short.values, 4 * long.values)
    np.testing.assert_allclose(short.values[1], (2 * np.pi) ** 2)


@pytest.mark.parametrize("n_t", [7, 8])
def test_fourier_full_basis_odd_even(n_t):
    basis = fourier_time_basis(n_t, n_t)
    np.testing.assert_allclose(basis.gram(), np.eye(n_t), atol=1e-10)


def test_fourier_k_too_large():
    with pytest.raises(ConfigError):
        fourier_time_basis(4, 5)


def test_project_constant_field(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 5)
    field = np.full((grid_mesh.n_vertices, 1), 2.0)
    beta = project(field, basis)
    np.testing.assert_allclose(beta[0, 0], 2.0 * np.sqrt(M.sum()), atol=1e-10)
    np.testing.assert_allclose(beta[1:], 0.0, atol=1e-10)


def test_full_basis_completeness(grid_mesh, rng):
    L, M = assemble_operators(grid_mesh)
    n = grid_mesh.n_vertices
    basis = compute_lbo_basis(L, M, n)
    field = rng.randn(n, 2)
    np.testing.assert_allclose(reconstruct(project(field, basis), basis), field, atol=1e-8)
    # dense oracle: solve Phi beta = f directly
    beta = scipy.linalg.solve(basis.vectors, field)
    np.testing.assert_allclose(project(field, basis), beta, atol=1e-8)


def test_project_reconstruct_identity(grid_mesh, rng):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 6)
    beta = rng.randn(3, 6, 2)
    np.testing.assert_allclose(project(reconstruct(beta, basis), basis), beta, atol=1e-10)


def test_project_shape_mismatch(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 4)
    with pytest.raises(ShapeError):
        project(np.zeros((grid_mesh.n_vertices + 1, 1)), basis)
    with pytest.raises(ShapeError):
        reconstruct(np.zeros((5, 1)), basis)


def test_truncate(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 8)
    small = basis.truncate(3)
    np.testing.assert_array_equal(small.vectors, basis.vectors[:, :3])
    assert small.ref == basis.ref
    with pytest.raises(ConfigError):
        basis.truncate(9)


def test_basis_cache(tmp_path, grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 5, grid_mesh.checksum())
    save_basis(basis, tmp_path / "basis")
    loaded = load_basis(tmp_path / "basis", grid_mesh.checksum())
    np.testing.assert_array_equal(loaded.vectors, basis.vectors)
    np.testing.assert_array_equal(loaded.values, basis.values)
    assert loaded.ref == basis.ref
    with pytest.raises(ShapeError):
        load_basis(tmp_path / "basis", "another-mesh")
