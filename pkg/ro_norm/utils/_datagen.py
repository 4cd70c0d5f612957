import logging
from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import factorized
from joblib import Parallel, delayed
from sklearn.model_selection import train_test_split
from sklearn.utils import check_random_state
from tqdm import tqdm

from ro_norm.utils._errors import ConfigError, DataError, NumericsError, ShapeError
from ro_norm.utils._dataset import MappingKind, OperatorDataset, save_splits
from ro_norm.utils._mesh import assemble_operators
from ro_norm.utils._spectral import compute_lbo_basis, fourier_time_basis

logger = logging.getLogger(__name__)

CASE_KINDS = {
    "heat_ic": MappingKind.INCREASE_FROM_SPACE,
    "heat_layout": MappingKind.INCREASE_FROM_SPACE,
    "wave_forward": MappingKind.INCREASE_FROM_TIME,
    "wave_inverse": MappingKind.DECREASE_TO_TIME,
    "heat_to_final": MappingKind.DECREASE_TO_SPACE,
}

_GRF_DIM = {"lbo": 2, "fourier": 1}


@dataclass(frozen=True)
class GrfSpec:
    """Gaussian random field with spectrum ``sigma^2 (lambda + tau^2)^(-alpha)``.

    Parameters
    ----------
    alpha : float
        Smoothness exponent.
    tau : float
        Inverse length scale.
    n_modes : int
        Number of basis functions the field is expanded on.
    sigma : float | None
        Amplitude. ``None`` uses ``tau ** (alpha - dim / 2)`` with ``dim``
        the dimension of the domain (2 on a mesh, 1 on the time axis).
    seed : int
        Seed used when no random state is passed to ``sample_grf``.
    """

    alpha: float = 3.0
    tau: float = 3.0
    n_modes: int = 64
    sigma: float = None
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.tau <= 0:
            raise ConfigError(f"alpha and tau must be positive, got {self}")
        if self.n_modes < 1:
            raise ConfigError(f"n_modes must be positive, got {self.n_modes}")

    def amplitude(self, dim):
        if self.sigma is not None:
            return self.sigma
        return self.tau ** (self.alpha - dim / 2.0)


@dataclass(frozen=True)
class PdeRun:
    """Time stepping of the heat and wave generators.

    ``source_node`` is the vertex the wave signal drives; ``None`` lets
    ``build_dataset`` pick the vertex closest to the mesh centroid.
    """

    dt: float = 0.01
    n_t: int = 50
    diffusivity: float = 1.0
    c2: float = 0.1
    source_node: int = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_t < 1:
            raise ConfigError(f"n_t must be positive, got {self.n_t}")
        if self.diffusivity <= 0 or self.c2 <= 0:
            raise ConfigError("diffusivity and c2 must be positive")


@dataclass(frozen=True)
class LayoutSpec:
    """Disk-shaped heat sources placed without overlap."""

    n_sources: int = 4
    radius: float = 0.12
    power: float = 1.0
    max_tries: int = 1000

    def __post_init__(self):
        if self.n_sources < 1 or self.radius <= 0 or self.max_tries < 1:
            raise ConfigError(f"invalid layout {self}")


def grf_coefficients(basis, spec, random_state=None, noise=None):
    """Random expansion coefficients of a GRF on ``basis``.

    ``noise`` replaces the standard normal draws when given.
    """
    if basis.kind not in _GRF_DIM:
        raise ConfigError(f"GRFs need an lbo or fourier basis, got {basis.kind}")
    if spec.n_modes > basis.k:
        raise ConfigError(
            f"n_modes={spec.n_modes} exceeds the {basis.k} basis functions"
        )
    if noise is None:
        rng = check_random_state(spec.seed if random_state is None else random_state)
        noise = rng.standard_normal(spec.n_modes)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (spec.n_modes,):
        raise ShapeError(f"noise must have shape ({spec.n_modes},), got {noise.shape}")
    scale = (basis.values[:spec.n_modes] + spec.tau ** 2) ** (-spec.alpha / 2.0)
    return spec.amplitude(_GRF_DIM[basis.kind]) * scale * noise


def sample_grf(basis, spec, random_state=None, noise=None):
    """Draw one field ``sum_k c_k phi_k`` at the basis points, shape (n_points,)."""
    coefficients = grf_coefficients(basis, spec, random_state, noise)
    return basis.vectors[:, :spec.n_modes] @ coefficients


def sample_layout(mesh, spec, random_state=None):
    """Sum of disk indicators with rejection-sampled, non-overlapping centres."""
    rng = check_random_state(random_state)
    xy = mesh.vertices[:, :2]
    low = xy.min(axis=0) + spec.radius
    high = xy.max(axis=0) - spec.radius
    if (high < low).any():
        raise ConfigError(f"radius {spec.radius} too large for the mesh")
    centres = []
    for _ in range(spec.max_tries):
        candidate = rng.uniform(low, high)
        if all(np.linalg.norm(candidate - c) >= 2 * spec.radius for c in centres):
            centres.append(candidate)
            if len(centres) == spec.n_sources:
                break
    else:
        raise DataError(
            f"placed {len(centres)} of {spec.n_sources} sources in "
            f"{spec.max_tries} tries"
        )
    field = np.zeros(len(xy))
    for c in centres:
        field += spec.power * (np.linalg.norm(xy - c, axis=1) <= spec.radius)
    return field


def solve_heat(L, M, initial, source=None, run=PdeRun()):
    """Implicit Euler for ``M dT/dt + kappa L T = M s``.

    Parameters
    ----------
    L : sparse matrix, shape=(n, n)
        Stiffness matrix.
    M : array, shape=(n,)
        Lumped mass.
    initial : array, shape=(n,)
        Temperature at t=0.
    source : array, shape=(n,) or (n, n_t) | None
        Constant or time-varying nodal source.
    run : PdeRun

    Returns
    -------
    trajectory : array, shape=(n, n_t)
        States after steps ``1..n_t``.
    """
    M = np.asarray(M, dtype=np.float64)
    n = len(M)
    T = np.asarray(initial, dtype=np.float64)
    if T.shape != (n,):
        raise ShapeError(f"initial field of shape {T.shape} on {n} nodes")
    if source is not None:
        source = np.asarray(source, dtype=np.float64)
        if source.shape not in ((n,), (n, run.n_t)):
            raise ShapeError(f"source of shape {source.shape} on {n} nodes")

    A = (sparse.diags(M) + run.dt * run.diffusivity * L).tocsc()
    try:
        solve = factorized(A)
    except RuntimeError as e:
        raise NumericsError(f"heat system is singular: {e}")

    trajectory = np.empty((n, run.n_t))
    for step in range(run.n_t):
        rhs = M * T
        if source is not None:
            s = source if source.ndim == 1 else source[:, step]
            rhs = rhs + run.dt * M * s
        T = solve(rhs)
        trajectory[:, step] = T
    return trajectory


def max_lbo_eigenvalue(L, M):
    """Largest eigenvalue of ``M^-1 L``, computed densely."""
    inv_sqrt_m = 1.0 / np.sqrt(M)
    B = inv_sqrt_m[:, None] * L.toarray() * inv_sqrt_m[None, :]
    n = len(M)
    return float(scipy.linalg.eigh(B, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


def max_stable_dt(L, M, c2, lam_max=None):
    """Leapfrog stability bound ``2 / sqrt(c2 * lambda_max)``."""
    if lam_max is None:
        lam_max = max_lbo_eigenvalue(L, M)
    if lam_max <= 0:
        return np.inf
    return 2.0 / np.sqrt(c2 * lam_max)


def solve_wave(L, M, source_signal=None, run=PdeRun(), initial_displacement=None,
               lam_max=None):
    """Leapfrog scheme for ``u_tt = -c2 M^-1 L u + s`` from rest.

    The signal is an acceleration injected at ``run.source_node``:
    ``s^n = signal[n] e_node``. The first step uses the Taylor start
    ``u^1 = u^0 + dt^2 / 2 (-c2 M^-1 L u^0 + s^0)``.

    Parameters
    ----------
    L : sparse matrix, shape=(n, n)
    M : array, shape=(n,)
    source_signal : array, shape=(n_t,) | None
        Signal at times ``0, dt, ..., (n_t - 1) dt``.
    run : PdeRun
    initial_displacement : array, shape=(n,) | None
        Starting displacement, zero when omitted.
    lam_max : float | None
        Cached largest eigenvalue of ``M^-1 L`` for the stability check.

    Returns
    -------
    trajectory : array, shape=(n, n_t)
        Displacement after steps ``1..n_t``.
    """
    M = np.asarray(M, dtype=np.float64)
    n = len(M)
    dt_max = max_stable_dt(L, M, run.c2, lam_max)
    if run.dt >= dt_max:
        raise NumericsError(
            f"dt={run.dt} violates the leapfrog bound dt < {dt_max:.4g}"
        )
    signal = np.zeros(run.n_t)
    if source_signal is not None:
        signal = np.asarray(source_signal, dtype=np.float64)
        if signal.shape != (run.n_t,):
            raise ShapeError(f"signal of shape {signal.shape}, expected ({run.n_t},)")
        if run.source_node is None or not 0 <= run.source_node < n:
            raise ConfigError(f"source_node {run.source_node} is not a mesh vertex")

    def acceleration(u, step):
        a = -run.c2 * (L @ u) / M
        if source_signal is not None:
            a[run.source_node] += signal[step]
        return a

    dt2 = run.dt ** 2
    u_prev = np.zeros(n) if initial_displacement is None else (
        np.asarray(initial_displacement, dtype=np.float64).copy()
    )
    u = u_prev + 0.5 * dt2 * acceleration(u_prev, 0)
    trajectory = np.empty((n, run.n_t))
    trajectory[:, 0] = u
    for step in range(1, run.n_t):
        u_prev, u = u, 2.0 * u - u_prev + dt2 * acceleration(u, step)
        trajectory[:, step] = u
    return trajectory


class _CaseContext:
    """Operators and bases shared by every sample of one dataset."""

    def __init__(self, case, mesh, run, grf, layout):
        self.mesh = mesh
        self.layout = layout
        self.grf = grf
        self.L, self.M = assemble_operators(mesh)
        if run.source_node is None:
            run = PdeRun(run.dt, run.n_t, run.diffusivity, run.c2, mesh.centroid_vertex())
        self.run = run
        n_modes = min(grf.n_modes, mesh.n_vertices)
        self.mesh_basis = compute_lbo_basis(self.L, self.M, n_modes, mesh.checksum())
        self.time_basis = fourier_time_basis(
            run.n_t, min(grf.n_modes, run.n_t), run.n_t * run.dt
        )
        self.lam_max = None
        if case.startswith("wave"):
            self.lam_max = max_lbo_eigenvalue(self.L, self.M)

    def mesh_grf(self, rng):
        spec = GrfSpec(self.grf.alpha, self.grf.tau, self.mesh_basis.k, self.grf.sigma)
        return sample_grf(self.mesh_basis, spec, rng)

    def time_grf(self, rng):
        spec = GrfSpec(self.grf.alpha, self.grf.tau, self.time_basis.k, self.grf.sigma)
        return sample_grf(self.time_basis, spec, rng)

    def wave(self, signal):
        return solve_wave(self.L, self.M, signal, self.run, lam_max=self.lam_max)


def _generate_sample(case, context, seed):
    """One ``(a, u)`` pair as ``(n_x, n_t)`` arrays, singleton axes kept."""
    rng = check_random_state(seed)
    run = context.run
    if case == "heat_ic":
        a = context.mesh_grf(rng)
        u = solve_heat(context.L, context.M, a, run=run)
        return a[:, None], u
    if case == "heat_layout":
        a = sample_layout(context.mesh, context.layout, rng)
        u = solve_heat(context.L, context.M, np.zeros_like(a), a, run)
        return a[:, None], u
    if case == "heat_to_final":
        initial = context.mesh_grf(rng)
        a = solve_heat(context.L, context.M, initial, run=run)
        return a, run.dt * a.sum(axis=1, keepdims=True)
    signal = context.time_grf(rng)
    trajectory = context.wave(signal)
    if case == "wave_forward":
        return signal[None, :], trajectory
    return trajectory, signal[None, :]


def build_dataset(case, n_train, n_test, seed, mesh, run=PdeRun(), grf=GrfSpec(),
                  layout=LayoutSpec(), kind=None, data_dir=None, n_jobs=1,
                  provenance=None, verbose=True):
    """Generate the train and test splits of one case.

    Samples are drawn from independent seeds derived from ``(seed, index)``
    and split with ``train_test_split(random_state=seed)``, so the
    result is a pure function of the arguments.

    Parameters
    ----------
    case : {"heat_ic", "heat_layout", "wave_forward", "wave_inverse", "heat_to_final"}
        Problem to generate.
    n_train, n_test : int
        Split sizes.
    seed : int
        Generation seed.
    mesh : TriMesh
        Spatial domain.
    run : PdeRun
    grf : GrfSpec
    layout : LayoutSpec
        Source layout of ``heat_layout``.
    kind : MappingKind | None
        Expected mapping kind, checked against the case.
    data_dir : str | Path | None
        When given, the splits and the mesh are written there.
    n_jobs : int
        joblib workers over samples.
    provenance : dict | None
        Extra header entries (e.g. the config hash).

    Returns
    -------
    train, test : OperatorDataset
    """
    if case not in CASE_KINDS:
        raise ConfigError(f"Unknown case {case!r}, expected one of {list(CASE_KINDS)}")
    if kind is not None:
        try:
            kind = MappingKind(kind)
        except ValueError:
            raise ConfigError(f"Unknown mapping kind {kind!r}")
        if kind != CASE_KINDS[case]:
            raise ConfigError(
                f"case {case} is a {CASE_KINDS[case].value} mapping, not {kind.value}"
            )
    if n_train < 1 or n_test < 1:
        raise ConfigError(f"n_train={n_train} and n_test={n_test} must be positive")

    context = _CaseContext(case, mesh, run, grf, layout)
    n_total = n_train + n_test
    seeds = [
        int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
        for index in range(n_total)
    ]
    logger.info("Generating %d %s samples on %d nodes", n_total, case, mesh.n_vertices)
    samples = Parallel(n_jobs=n_jobs)(
        delayed(_generate_sample)(case, context, s)
        for s in tqdm(seeds, desc=case, disable=not verbose)
    )
    a = np.stack([s[0] for s in samples])[..., None]
    u = np.stack([s[1] for s in samples])[..., None]
    a_train, a_test, u_train, u_test = train_test_split(
        a, u, train_size=n_train, test_size=n_test, random_state=seed
    )

    header = {
        "case": case,
        "mesh": mesh.checksum(),
        "grf": asdict(grf),
        "run": asdict(context.run),
        "layout": asdict(layout),
        "seed": seed,
    }
    header.update(provenance or {})
    kind = CASE_KINDS[case]
    train = OperatorDataset(kind, a_train, u_train, run.dt, dict(header, split="train"))
    test = OperatorDataset(kind, a_test, u_test, run.dt, dict(header, split="test"))
    if data_dir is not None:
        save_splits(data_dir, train, test, mesh)
    return train, test
