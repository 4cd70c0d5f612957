import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import torch

from ro_norm.utils._errors import ConfigError, DataError, ShapeError
from ro_norm.utils._spectral import EigenBasis, _fix_signs

logger = logging.getLogger(__name__)

REDUCE_AXES = ("time", "space")

# einsum subscripts per reduced axis, basis first
_ENCODE = {
    "time": "tk,nxtc->nxck",
    "space": "xk,nxtc->ntck",
}
_DECODE = {
    "time": "tk,nxck->nxtc",
    "space": "xk,ntck->nxtc",
}


def _check_axis(reduce_axis):
    if reduce_axis not in REDUCE_AXES:
        raise ConfigError(
            f"reduce_axis must be one of {REDUCE_AXES}, got {reduce_axis!r}"
        )


@dataclass(frozen=True, eq=False)
class SnapshotTensor:
    """Sampled spatio-temporal functions.

    Parameters
    ----------
    data : array, shape=(N, n_x, n_t, c)
        Sample, space, time and channel axes. A function of space only
        has ``n_t = 1`` and a function of time only has ``n_x = 1``.
    dt : float
        Time step between consecutive time samples.
    """

    data: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 4 or min(data.shape) < 1:
            raise ShapeError(
                f"snapshots must have shape (N, n_x, n_t, c), got {data.shape}"
            )
        if not np.isfinite(data).all():
            raise DataError("snapshots contain non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self):
        return self.data.shape[0]

    @property
    def n_x(self):
        return self.data.shape[1]

    @property
    def n_t(self):
        return self.data.shape[2]

    @property
    def n_channels(self):
        return self.data.shape[3]

    def axis_length(self, reduce_axis):
        _check_axis(reduce_axis)
        return self.n_t if reduce_axis == "time" else self.n_x

    def trajectories(self, reduce_axis):
        """Channel-stacked trajectories along ``reduce_axis``, one per row."""
        _check_axis(reduce_axis)
        if reduce_axis == "time":
            stacked = self.data.transpose(0, 1, 3, 2)
        else:
            stacked = self.data.transpose(0, 2, 3, 1)
        return stacked.reshape(-1, self.axis_length(reduce_axis))


@dataclass(frozen=True, eq=False)
class WeightField:
    """Basis coefficients of every trajectory along the reduced axis.

    ``data`` has shape ``(N, n_pts, n_channels * d)`` with the ``d``
    coefficients of each channel stored contiguously.
    """

    data: np.ndarray
    reduced_axis: str
    basis_ref: str
    n_channels: int = 1

    def __post_init__(self):
        _check_axis(self.reduced_axis)
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[-1] % self.n_channels:
            raise ShapeError(
                f"weight field of shape {data.shape} cannot hold "
                f"{self.n_channels} channels"
            )
        object.__setattr__(self, "data", data)

    @property
    def d(self):
        return self.data.shape[-1] // self.n_channels


def _as_snapshots(snapshots):
    if isinstance(snapshots, SnapshotTensor):
        return snapshots
    return SnapshotTensor(snapshots)


def compute_pod_basis(snapshots, reduce_axis, k):
    """Non-centred POD basis along one axis of a snapshot tensor.

    The covariance is the small Gram matrix of all trajectories along
    ``reduce_axis`` (every sample, every point of the kept axis and every
    channel), averaged over those trajectories. No mean is removed.

    Parameters
    ----------
    snapshots : SnapshotTensor | array, shape=(N, n_x, n_t, c)
        Training snapshots.
    reduce_axis : {"time", "space"}
        Axis the basis functions live on.
    k : int
        Number of modes, at most the length of ``reduce_axis``.

    Returns
    -------
    basis : EigenBasis
        ``kind="pod"``, unit weights, singular values in decreasing order.
    """
    snapshots = _as_snapshots(snapshots)
    X = snapshots.trajectories(reduce_axis)
    n_rows, n_axis = X.shape
    if not 1 <= k <= n_axis:
        raise ConfigError(f"k={k} must lie in [1, {n_axis}] for the {reduce_axis} axis")

    C = X.T @ X / n_rows
    eigvals, eigvecs = scipy.linalg.eigh(0.5 * (C + C.T))
    eigvals = np.clip(eigvals[::-1][:k], 0.0, None)
    vectors = _fix_signs(eigvecs[:, ::-1][:, :k])
    singular_values = np.sqrt(eigvals * n_rows)

    digest = hashlib.sha256(np.ascontiguousarray(X).tobytes()).hexdigest()[:12]
    logger.debug(
        "POD along %s: %d trajectories, leading singular value %.3e",
        reduce_axis, n_rows, singular_values[0],
    )
    return EigenBasis(
        "pod", vectors, singular_values, np.ones(n_axis), f"{reduce_axis}:{digest}"
    )


def energy_truncation(values, threshold=0.99):
    """Smallest ``d`` whose leading values hold ``threshold`` of the energy.

    Energy is the sum of squared singular values.
    """
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    values = np.asarray(values, dtype=np.float64)
    if (values < 0).any() or (np.diff(values) > 0).any():
        raise DataError("singular values must be non-negative and descending")
    energy = values ** 2
    total = energy.sum()
    if total == 0:
        raise DataError("cannot truncate an all-zero spectrum")
    fraction = np.cumsum(energy) / total
    return int(np.argmax(fraction >= threshold)) + 1


def _einsum(subscripts, basis_matrix, array):
    if isinstance(array, torch.Tensor):
        basis_matrix = torch.as_tensor(
            basis_matrix, dtype=array.dtype, device=array.device
        )
        return torch.einsum(subscripts, basis_matrix, array)
    return np.einsum(subscripts, basis_matrix, array)


def encode_array(data, basis, reduce_axis):
    """Encode an ``(N, n_x, n_t, c)`` array or tensor to ``(N, n_pts, c * d)``."""
    _check_axis(reduce_axis)
    axis = 2 if reduce_axis == "time" else 1
    if data.ndim != 4 or data.shape[axis] != basis.n_points:
        raise ShapeError(
            f"snapshots of shape {tuple(data.shape)} do not match a basis on "
            f"{basis.n_points} {reduce_axis} points"
        )
    weighted = basis.weights[:, None] * basis.vectors
    coefficients = _einsum(_ENCODE[reduce_axis], weighted, data)
    return coefficients.reshape(*coefficients.shape[:2], -1)


def decode_array(weights, basis, reduce_axis, n_channels=1):
    """Inverse of ``encode_array`` on the span of ``basis``."""
    _check_axis(reduce_axis)
    if weights.ndim != 3 or weights.shape[-1] != n_channels * basis.k:
        raise ShapeError(
            f"weights of shape {tuple(weights.shape)} do not match "
            f"{n_channels} channels of a {basis.k}-vector basis"
        )
    weights = weights.reshape(*weights.shape[:2], n_channels, basis.k)
    return _einsum(_DECODE[reduce_axis], basis.vectors, weights)


def encode_unequal(snapshots, basis, reduce_axis):
    """Trade the reduced axis of ``snapshots`` for basis coefficients.

    Every trajectory along ``reduce_axis`` is projected on the columns of
    ``basis`` under the basis weights, channel by channel.

    Parameters
    ----------
    snapshots : SnapshotTensor | array, shape=(N, n_x, n_t, c)
    basis : EigenBasis
        Basis sampled on the points of ``reduce_axis``.
    reduce_axis : {"time", "space"}

    Returns
    -------
    weights : WeightField
        Shape ``(N, n_x, c * d)`` for temporal reduction and
        ``(N, n_t, c * d)`` for spatial reduction.
    """
    snapshots = _as_snapshots(snapshots)
    data = encode_array(snapshots.data, basis, reduce_axis)
    return WeightField(data, reduce_axis, basis.ref, snapshots.n_channels)


def decode_unequal(weights, basis, dt=1.0):
    """Rebuild the snapshots ``sum_k w_k phi_k`` from a weight field."""
    if weights.basis_ref != basis.ref:
        raise ShapeError(
            f"weights were encoded with {weights.basis_ref!r}, cannot decode "
            f"with {basis.ref!r}"
        )
    data = decode_array(weights.data, basis, weights.reduced_axis, weights.n_channels)
    return SnapshotTensor(data, dt)
