import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import torch

from ro_norm.utils._errors import ConfigError, NumericsError, ShapeError
from ro_norm.utils._io import write_container, read_container

logger = logging.getLogger(__name__)

BASIS_KINDS = ("lbo", "fourier", "pod")
_SIGN_TOL = 1e-10


def _fix_signs(vectors):
    """Flip columns so that their first entry above 1e-10 in magnitude is positive."""
    vectors = vectors.copy()
    for j in range(vectors.shape[1]):
        nonzero = np.nonzero(np.abs(vectors[:, j]) > _SIGN_TOL)[0]
        if len(nonzero) and vectors[nonzero[0], j] < 0:
            vectors[:, j] *= -1
    return vectors


def _order_ties(values, vectors, rtol=1e-10):
    """Order columns of repeated eigenvalues lexicographically."""
    order = np.arange(len(values))
    start = 0
    while start < len(values):
        stop = start + 1
        while stop < len(values) and (
            abs(values[stop] - values[start]) <= rtol * (1.0 + abs(values[start]))
        ):
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            # lexsort uses its last key as the primary one
            perm = np.lexsort(np.round(block, 12)[::-1])
            order[start:stop] = start + perm
        start = stop
    return values[order], vectors[:, order]


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Orthonormal basis sampled on a set of points.

    Parameters
    ----------
    kind : {"lbo", "fourier", "pod"}
        Origin of the basis.
    vectors : array, shape=(n_points, k)
        Columns are the basis functions sampled at the points.
    values : array, shape=(k,)
        Eigenvalues (ascending, lbo/fourier) or singular values
        (descending, pod).
    weights : array, shape=(n_points,)
        Quadrature weights of the inner product the columns are
        orthonormal under.
    source : str
        Identifier of the mesh, time grid or data the basis was built from.
    """

    kind: str
    vectors: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ConfigError(f"Unknown basis kind {self.kind!r}")
        vectors = np.asarray(self.vectors, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if vectors.ndim != 2 or weights.shape != (vectors.shape[0],):
            raise ShapeError(
                f"vectors {vectors.shape} and weights {weights.shape} disagree"
            )
        if values.shape != (vectors.shape[1],):
            raise ShapeError(
                f"{values.shape[0]} values for {vectors.shape[1]} basis vectors"
            )
        if (weights <= 0).any():
            raise ShapeError("basis weights must be positive")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "values", values)

    @property
    def n_points(self):
        return self.vectors.shape[0]

    @property
    def k(self):
        return self.vectors.shape[1]

    @property
    def ref(self):
        """Identifier of the inner product, shared by all truncations."""
        return f"{self.kind}:{self.source}"

    def truncate(self, k):
        if not 1 <= k <= self.k:
            raise ConfigError(f"Cannot truncate a {self.k}-vector basis to {k}")
        return EigenBasis(
            self.kind, self.vectors[:, :k], self.values[:k], self.weights, self.source
        )

    def gram(self):
        return self.vectors.T @ (self.weights[:, None] * self.vectors)

    @cached_property
    def tensors(self):
        """``(vectors, weighted vectors)`` as float64 torch tensors."""
        phi = torch.as_tensor(self.vectors, dtype=torch.float64)
        phi_w = torch.as_tensor(
            self.weights[:, None] * self.vectors, dtype=torch.float64
        )
        return phi, phi_w


def compute_lbo_basis(stiffness, lumped_mass, k, source=""):
    """Smallest ``k`` eigenpairs of ``L phi = lambda M phi``.

    The generalized problem is reduced to the symmetric matrix
    ``B = M^(-1/2) L M^(-1/2)``, solved densely, and back-scaled so the
    eigenfunctions are orthonormal under the lumped mass.

    Parameters
    ----------
    stiffness : sparse matrix, shape=(n, n)
        Cotangent stiffness matrix from ``assemble_operators``.
    lumped_mass : array, shape=(n,)
        Lumped mass from ``assemble_operators``.
    k : int
        Number of eigenpairs, ``1 <= k <= n``.
    source : str
        Identifier stored on the basis (usually the mesh checksum).

    Returns
    -------
    basis : EigenBasis
    """
    n = len(lumped_mass)
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} must lie in [1, {n}]")
    inv_sqrt_m = 1.0 / np.sqrt(lumped_mass)
    L = stiffness.toarray() if hasattr(stiffness, "toarray") else np.asarray(stiffness)
    B = inv_sqrt_m[:, None] * L * inv_sqrt_m[None, :]
    B = 0.5 * (B + B.T)
    try:
        values, psi = scipy.linalg.eigh(B, subset_by_index=[0, k - 1])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericsError(f"LBO eigensolver failed: {e}")
    vectors = _fix_signs(inv_sqrt_m[:, None] * psi)
    values, vectors = _order_ties(values, vectors)
    logger.debug("LBO basis: k=%d, lambda in [%.3e, %.3e]", k, values[0], values[-1])
    return EigenBasis("lbo", vectors, values, lumped_mass, source)


def fourier_time_basis(n_t, k, duration=1.0):
    """Real orthonormal Fourier family on ``n_t`` uniform samples.

    Samples sit at ``t_p = p * duration / n_t``. Column 0 is the constant,
    then cosine/sine pairs of increasing frequency, normalized under the
    uniform weights ``1 / n_t``. Values are the squared frequencies
    ``(2 pi j / duration)^2``.

    Parameters
    ----------
    n_t : int
        Number of time samples.
    k : int
        Number of basis functions, ``k <= n_t``.
    duration : float
        Length ``T`` of the time window.

    Returns
    -------
    basis : EigenBasis
    """
    if not 1 <= k <= n_t:
        raise ConfigError(f"k={k} must lie in [1, {n_t}]")
    p = np.arange(n_t)
    columns = [np.ones(n_t)]
    freqs = [0]
    j = 1
    while len(columns) < k:
        angle = 2.0 * np.pi * j * p / n_t
        if 2 * j == n_t:
            # Nyquist: the sine vanishes, the cosine is (-1)^p
            columns.append(np.cos(angle))
            freqs.append(j)
        else:
            columns.append(np.sqrt(2.0) * np.cos(angle))
            freqs.append(j)
            if len(columns) < k:
                columns.append(np.sqrt(2.0) * np.sin(angle))
                freqs.append(j)
        j += 1
    vectors = _fix_signs(np.stack(columns, axis=1))
    values = (2.0 * np.pi * np.asarray(freqs, dtype=np.float64) / duration) ** 2
    weights = np.full(n_t, 1.0 / n_t)
    return EigenBasis("fourier", vectors, values, weights, f"t{n_t}:{duration:g}")


def project(field, basis):
    """Spectral coefficients ``beta_i = <field, phi_i>``.

    Parameters
    ----------
    field : array, shape=(..., n_points, c)
    basis : EigenBasis

    Returns
    -------
    coefficients : array, shape=(..., k, c)
    """
    field = np.asarray(field, dtype=np.float64)
    if field.ndim < 2 or field.shape[-2] != basis.n_points:
        raise ShapeError(
            f"field of shape {field.shape} does not match a basis on "
            f"{basis.n_points} points"
        )
    return np.einsum("pk,...pc->...kc", basis.weights[:, None] * basis.vectors, field)


def reconstruct(coefficients, basis):
    """Field ``sum_i beta_i phi_i`` from coefficients of shape (..., k, c)."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.ndim < 2 or coefficients.shape[-2] != basis.k:
        raise ShapeError(
            f"coefficients of shape {coefficients.shape} do not match a "
            f"{basis.k}-vector basis"
        )
    return np.einsum("pk,...kc->...pc", basis.vectors, coefficients)


def save_basis(basis, directory):
    header = {
        "kind": basis.kind,
        "k": basis.k,
        "n_points": basis.n_points,
        "checksum": basis.source,
    }
    return write_container(
        directory,
        header,
        {"vectors": basis.vectors, "values": basis.values, "weights": basis.weights},
    )


def load_basis(directory, checksum=None):
    """Read a cached basis, optionally checking its source checksum."""
    header, arrays = read_container(directory)
    if checksum is not None and header["checksum"] != checksum:
        raise ShapeError(
            f"Cached basis in {directory} was built from {header['checksum']}, "
            f"expected {checksum}"
        )
    return EigenBasis(
        header["kind"],
        arrays["vectors"],
        arrays["values"],
        arrays["weights"],
        header["checksum"],
    )
