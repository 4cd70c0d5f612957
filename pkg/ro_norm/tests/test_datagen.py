import numpy as np
import pytest

from ro_norm.utils import (
    CASE_KINDS,
    ConfigError,
    DataError,
    GrfSpec,
    LayoutSpec,
    MappingKind,
    NumericsError,
    PdeRun,
    assemble_operators,
    build_dataset,
    compute_lbo_basis,
    fourier_time_basis,
    load_splits,
    max_stable_dt,
    sample_grf,
    sample_layout,
    solve_heat,
    solve_wave,
)
from ro_norm.utils._datagen import grf_coefficients, max_lbo_eigenvalue
from ro_norm.tests.conftest import rectangle_mesh


@pytest.fixture
def operators():
    return assemble_operators(rectangle_mesh(7, 6))


def test_grf_zero_noise(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 10)
    field = sample_grf(basis, GrfSpec(n_modes=10), noise=np.zeros(10))
    np.testing.assert_array_equal(field, 0.0)


def test_grf_coefficient_variance():
    basis = fourier_time_basis(32, 8, duration=1.0)
    spec = GrfSpec(alpha=2.0, tau=3.0, n_modes=8, sigma=1.0)
    rng = np.random.RandomState(0)
    draws = np.stack([grf_coefficients(basis, spec, rng) for _ in range(10000)])
    expected = (basis.values + spec.tau ** 2) ** (-spec.alpha)
    np.testing.assert_allclose(draws.var(axis=0), expected, rtol=0.05)


def test_grf_smoothness_ordering(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 20)
    rng = np.random.RandomState(0)

    def high_mode_fraction(alpha):
        spec = GrfSpec(alpha=alpha, tau=3.0, n_modes=20)
        fractions = []
        for _ in range(100):
            c = grf_coefficients(basis, spec, rng)
            fractions.append((c[5:] ** 2).sum() / (c ** 2).sum())
        return np.mean(fractions)

    assert high_mode_fraction(3.0) < high_mode_fraction(1.0)


def test_grf_is_seeded(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 10)
    spec = GrfSpec(n_modes=10, seed=4)
    np.testing.assert_array_equal(sample_grf(basis, spec), sample_grf(basis, spec))


def test_grf_amplitude_convention():
    assert GrfSpec(alpha=3.0, tau=3.0).amplitude(2) == pytest.approx(9.0)
    assert GrfSpec(alpha=3.5, tau=5.0).amplitude(1) == pytest.approx(125.0)
    assert GrfSpec(sigma=2.0).amplitude(2) == 2.0


def test_grf_errors(grid_mesh):
    L, M = assemble_operators(grid_mesh)
    basis = compute_lbo_basis(L, M, 5)
    with pytest.raises(ConfigError):
        sample_grf(basis, GrfSpec(n_modes=6))
    with pytest.raises(ConfigError):
        GrfSpec(alpha=-1.0)


def test_layout_sources():
    mesh = rectangle_mesh(21, 21)
    spec = LayoutSpec(n_sources=3, radius=0.1, power=2.0)
    field = sample_layout(mesh, spec, 0)
    assert set(np.unique(field)) <= {0.0, 2.0}
    assert (field > 0).any()
    np.testing.assert_array_equal(field, sample_layout(mesh, spec, 0))


def test_layout_too_many_sources():
    with pytest.raises(DataError):
        sample_layout(rectangle_mesh(5, 5), LayoutSpec(n_sources=50, radius=0.2, max_tries=100), 0)


def test_heat_constant_equilibrium(operators):
    L, M = operators
    trajectory = solve_heat(L, M, np.full(len(M), 3.0), run=PdeRun(dt=0.05, n_t=20))
    np.testing.assert_allclose(trajectory, 3.0, atol=1e-10)


def test_heat_conserves_mass(operators, rng):
    L, M = operators
    initial = rng.randn(len(M))
    trajectory = solve_heat(L, M, initial, run=PdeRun(dt=0.01, n_t=30))
    np.testing.assert_allclose(M @ trajectory, M @ initial, atol=1e-8)


def test_heat_modal_decay(operators):
    L, M = operators
    basis = compute_lbo_basis(L, M, 4)
    run = PdeRun(dt=0.02, n_t=10, diffusivity=0.7)
    phi = basis.vectors[:, 3]
    trajectory = solve_heat(L, M, phi, run=run)
    factor = 1.0 / (1.0 + run.dt * run.diffusivity * basis.values[3])
    expected = phi[:, None] * factor ** np.arange(1, run.n_t + 1)
    np.testing.assert_allclose(trajectory, expected, atol=1e-8)


def test_heat_maximum_bound(operators, rng):
    L, M = operators
    initial = rng.randn(len(M))
    source = rng.randn(len(M))
    for dt in (0.001, 0.1, 10.0):
        run = PdeRun(dt=dt, n_t=10)
        trajectory = solve_heat(L, M, initial, source, run)
        bound = np.abs(initial).max() + dt * np.arange(1, 11) * np.abs(source).max()
        assert np.all(np.abs(trajectory).max(axis=0) <= bound + 1e-10)


def test_heat_source_shape(operators):
    L, M = operators
    with pytest.raises(ValueError):
        solve_heat(L, M, np.zeros(len(M)), np.zeros(3), PdeRun())


def test_wave_zero_source(operators):
    L, M = operators
    run = PdeRun(dt=0.01, n_t=20, source_node=0)
    trajectory = solve_wave(L, M, np.zeros(20), run)
    np.testing.assert_array_equal(trajectory, 0.0)


def test_wave_linearity(operators, rng):
    L, M = operators
    run = PdeRun(dt=0.01, n_t=40, source_node=5)
    s1, s2 = rng.randn(2, 40)
    np.testing.assert_allclose(
        solve_wave(L, M, s1 + s2, run),
        solve_wave(L, M, s1, run) + solve_wave(L, M, s2, run),
        atol=1e-9,
    )


def test_wave_energy_is_conserved(operators):
    L, M = operators
    basis = compute_lbo_basis(L, M, 3)
    run = PdeRun(dt=0.01, n_t=501, c2=0.1)
    u = solve_wave(L, M, run=run, initial_displacement=basis.vectors[:, 2])

    def energy(u_now, u_next):
        velocity = (u_next - u_now) / run.dt
        mid = 0.5 * (u_now + u_next)
        return 0.5 * (velocity @ (M * velocity) + run.c2 * mid @ (L @ mid))

    energies = np.array([energy(u[:, n], u[:, n + 1]) for n in range(500)])
    assert np.abs(energies - energies[0]).max() / energies[0] < 0.01


def test_wave_second_order_convergence(operators):
    L, M = operators
    basis = compute_lbo_basis(L, M, 2)
    phi = basis.vectors[:, 1]
    final_time = 1.0

    def displacement(dt):
        n_t = int(round(final_time / dt))
        u = solve_wave(L, M, run=PdeRun(dt=dt, n_t=n_t, c2=1.0), initial_displacement=phi)
        return u[:, -1]

    dt = 0.02
    reference = displacement(dt / 8)
    coarse = np.linalg.norm(displacement(dt) - reference)
    fine = np.linalg.norm(displacement(dt / 2) - reference)
    assert 3.0 <= coarse / fine <= 5.0


def test_wave_stability_check(operators):
    L, M = operators
    dt_max = max_stable_dt(L, M, 0.1)
    np.testing.assert_allclose(dt_max, 2.0 / np.sqrt(0.1 * max_lbo_eigenvalue(L, M)))
    with pytest.raises(NumericsError):
        solve_wave(L, M, run=PdeRun(dt=1.01 * dt_max, n_t=5, c2=0.1))


def test_wave_source_node(operators):
    L, M = operators
    with pytest.raises(ConfigError):
        solve_wave(L, M, np.ones(5), PdeRun(dt=0.01, n_t=5, source_node=len(M)))


def test_build_dataset_smoke(tmp_path, triangle_mesh):
    run = PdeRun(dt=0.01, n_t=4)
    train, test = build_dataset(
        "heat_ic", 2, 1, 0, triangle_mesh, run, GrfSpec(n_modes=3),
        data_dir=tmp_path / "data", verbose=False,
    )
    assert len(train) == 2 and len(test) == 1
    assert train.a.shape == (2, 3, 1, 1)
    assert train.u.shape == (2, 3, 4, 1)
    loaded_train, loaded_test, mesh = load_splits(tmp_path / "data")
    assert loaded_train.header["N"] == 2
    assert loaded_test.header["N"] == 1
    assert loaded_train.header["n_x"] == 3 and loaded_train.header["n_t"] == 4
    assert mesh.n_vertices == 3


def test_build_dataset_is_deterministic(tmp_path, grid_mesh):
    run = PdeRun(dt=0.01, n_t=5)
    for name in ("first", "second"):
        build_dataset(
            "heat_ic", 3, 2, 7, grid_mesh, run, GrfSpec(n_modes=8),
            data_dir=tmp_path / name, verbose=False,
        )
    for split in ("train", "test"):
        for blob in ("a.bin", "u.bin", "header.json"):
            assert (tmp_path / "first" / split / blob).read_bytes() == (
                tmp_path / "second" / split / blob
            ).read_bytes()


def test_build_dataset_parallel_matches_serial(grid_mesh):
    run = PdeRun(dt=0.01, n_t=5)
    serial, _ = build_dataset("heat_ic", 3, 1, 2, grid_mesh, run, GrfSpec(n_modes=8), verbose=False)
    parallel, _ = build_dataset(
        "heat_ic", 3, 1, 2, grid_mesh, run, GrfSpec(n_modes=8), n_jobs=2, verbose=False
    )
    np.testing.assert_array_equal(serial.u, parallel.u)


@pytest.mark.parametrize("case", list(CASE_KINDS))
def test_build_dataset_cases(case, grid_mesh):
    run = PdeRun(dt=0.01, n_t=6)
    layout = LayoutSpec(n_sources=2, radius=0.1)
    train, test = build_dataset(
        case, 3, 2, 0, grid_mesh, run, GrfSpec(n_modes=6), layout, verbose=False
    )
    assert train.kind == CASE_KINDS[case]
    assert train.case == case
    assert np.isfinite(train.u).all()
    assert train.n_x == grid_mesh.n_vertices and train.n_t == 6


def test_wave_inverse_regeneration(grid_mesh):
    run = PdeRun(dt=0.01, n_t=8)
    train, _ = build_dataset(
        "wave_inverse", 3, 1, 0, grid_mesh, run, GrfSpec(n_modes=8), verbose=False
    )
    L, M = assemble_operators(grid_mesh)
    source_node = train.header["run"]["source_node"]
    assert source_node == grid_mesh.centroid_vertex()
    replay = PdeRun(dt=0.01, n_t=8, source_node=source_node)
    for a, u in zip(train.a, train.u):
        np.testing.assert_allclose(solve_wave(L, M, u[0, :, 0], replay), a[..., 0], atol=1e-9)


def test_heat_to_final_regeneration(grid_mesh):
    run = PdeRun(dt=0.01, n_t=5)
    train, _ = build_dataset(
        "heat_to_final", 2, 1, 0, grid_mesh, run, GrfSpec(n_modes=8), verbose=False
    )
    np.testing.assert_allclose(train.u[:, :, 0, 0], run.dt * train.a[..., 0].sum(axis=2))
    L, M = assemble_operators(grid_mesh)
    # an implicit Euler step maps each state to the next one
    for a in train.a[..., 0]:
        np.testing.assert_allclose(solve_heat(L, M, a[:, 0], run=run)[:, :-1], a[:, 1:], atol=1e-9)


def test_build_dataset_kind_mismatch(grid_mesh):
    with pytest.raises(ConfigError):
        build_dataset(
            "heat_ic", 1, 1, 0, grid_mesh, kind=MappingKind.DECREASE_TO_TIME, verbose=False
        )
    with pytest.raises(ConfigError):
        build_dataset("burgers", 1, 1, 0, grid_mesh, verbose=False)
    with pytest.raises(ConfigError):
        build_dataset("heat_ic", 0, 1, 0, grid_mesh, verbose=False)


def test_build_dataset_unknown_kind(grid_mesh):
    with pytest.raises(ConfigError):
        build_dataset("heat_ic", 1, 1, 0, grid_mesh, kind="bogus", verbose=False)
