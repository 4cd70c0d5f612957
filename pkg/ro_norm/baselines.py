import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.linalg

from ro_norm.train import build_reduction_basis, fit, standardize_inputs
from ro_norm.utils import (
    ConfigError,
    EigenBasis,
    SnapshotTensor,
    compute_pod_basis,
    energy_truncation,
)
from ro_norm.utils._spectral import _fix_signs
from ro_norm.utils.architecture import (
    FcNet,
    PcaNetOperator,
    ReducedFcOperator,
    parameter_count,
)

logger = logging.getLogger(__name__)


def pca_flatten_basis(data, k):
    """Non-centred PCA of whole samples flattened over space and time.

    Parameters
    ----------
    data : array, shape=(N, ...)
        One sample per row once flattened.
    k : int
        Number of components, at most the flattened dimension.

    Returns
    -------
    basis : EigenBasis
        ``kind="pod"`` basis with unit weights on the flattened points.
    """
    data = np.asarray(data, dtype=np.float64)
    X = data.reshape(len(data), -1)
    n_samples, n_features = X.shape
    if not 1 <= k <= n_features:
        raise ConfigError(f"k={k} must lie in [1, {n_features}]")
    _, s, Vt = scipy.linalg.svd(X, full_matrices=k > min(n_samples, n_features))
    values = np.zeros(k)
    values[:min(k, len(s))] = s[:k]
    digest = hashlib.sha256(X.tobytes()).hexdigest()[:12]
    return EigenBasis(
        "pod", _fix_signs(Vt[:k].T), values, np.ones(n_features), f"flat:{digest}"
    )


def train_pca_net(dataset, config, k_in=None, k_out=None, test=None, verbose=True):
    """PCA-Net: a fully connected network between PCA coefficients.

    Both bases are computed on the training split. The network is trained
    on coefficient pairs with the same loss and optimizer as RO-NORM;
    predictions are decoded through the output basis.

    Parameters
    ----------
    dataset : OperatorDataset
        Training split.
    config : TrainConfig
        ``hidden_layers`` and ``activation`` shape the network.
    k_in, k_out : int | None
        Input and output component counts, ``truncated_modes`` by default.
    test : OperatorDataset | None
    verbose : bool

    Returns
    -------
    operator : PcaNetOperator
    history : DataFrame
    """
    k_in = min(k_in or config.truncated_modes, dataset.a[0].size)
    k_out = min(k_out or config.truncated_modes, dataset.u[0].size)
    input_basis = pca_flatten_basis(dataset.a, k_in)
    output_basis = pca_flatten_basis(dataset.u, k_out)
    network = FcNet(
        k_in, k_out, config.hidden_layers, config.activation, seed=config.seed
    )
    operator = PcaNetOperator(network, input_basis, output_basis, dataset.u.shape[1:])
    inputs = operator.encode_inputs(dataset.a)
    if config.normalize:
        inputs = standardize_inputs(operator, inputs)
    targets = operator.encode_targets(dataset.u)
    logger.info(
        "PCA-Net: %d parameters, k_in=%d, k_out=%d",
        parameter_count(operator), k_in, k_out,
    )
    history = fit(operator, inputs, targets, config, test, verbose)
    return operator, history


def train_ro_fc_nn(dataset, config, mesh=None, test=None, cache_dir=None, verbose=True):
    """RO-FC-NN: the reduced-order encoder and decoder around a fully connected network.

    The reduced axis is encoded with the same basis as RO-NORM, the weight
    field is flattened and a ``FcNet`` maps it to the flattened outputs
    (decrease kinds) or flattened inputs to the output weight field
    (increase kinds).

    Returns
    -------
    operator : ReducedFcOperator
    history : DataFrame
    """
    kind = dataset.kind
    reduction_basis = build_reduction_basis(dataset, config, mesh, cache_dir)
    c_a, c_u = dataset.a.shape[-1], dataset.u.shape[-1]
    n_points = dataset.a.shape[1] if kind.network_domain == "space" else dataset.a.shape[2]
    if kind.is_increase:
        in_features, out_features = n_points * c_a, n_points * c_u * reduction_basis.k
    else:
        in_features, out_features = n_points * c_a * reduction_basis.k, n_points * c_u
    network = FcNet(
        in_features, out_features, config.hidden_layers, config.activation, seed=config.seed
    )
    operator = ReducedFcOperator(
        kind, network, reduction_basis, c_u, n_points, config.reconstruction
    )
    inputs = operator.encode_inputs(dataset.a)
    if config.normalize:
        inputs = standardize_inputs(operator, inputs)
    targets = operator.encode_targets(dataset.u)
    logger.info(
        "RO-FC-NN %s: %d parameters, %s reduction basis d=%d",
        kind.value, parameter_count(operator), reduction_basis.kind, reduction_basis.k,
    )
    history = fit(operator, inputs, targets, config, test, verbose)
    return operator, history


@dataclass
class SvdDecayReport:
    """Singular values of separate (one axis) and overall (flattened) reduction."""

    separate: np.ndarray
    overall: np.ndarray
    k_separate: int
    k_overall: int
    reduce_axis: str
    threshold: float = 0.99

    def summary(self):
        return {
            "reduce_axis": self.reduce_axis,
            "threshold": self.threshold,
            "k_separate": self.k_separate,
            "k_overall": self.k_overall,
        }

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, values in (("separate", self.separate), ("overall", self.overall)):
            pd.DataFrame({"singular_value": values}).to_csv(
                directory / f"{name}.csv", index_label="index"
            )
        with open(directory / "svd_report.json", "w") as f:
            json.dump(self.summary(), f, indent=2)
        return directory


def svd_decay_report(dataset, reduce_axis=None, threshold=0.99):
    """Compare singular value decay of separate and overall reduction.

    The spatio-temporal side of the dataset (outputs of increase kinds,
    inputs of decrease kinds) is reduced either along one axis only or as
    whole flattened samples.
    """
    kind = dataset.kind
    reduce_axis = reduce_axis or kind.reduce_axis
    data = dataset.u if kind.is_increase else dataset.a
    snapshots = SnapshotTensor(data, dataset.dt)
    separate = compute_pod_basis(
        snapshots, reduce_axis, snapshots.axis_length(reduce_axis)
    ).values
    overall = scipy.linalg.svdvals(snapshots.data.reshape(snapshots.n_samples, -1))
    report = SvdDecayReport(
        separate,
        overall,
        energy_truncation(separate, threshold),
        energy_truncation(overall, threshold),
        reduce_axis,
        threshold,
    )
    logger.info(
        "k%.0f separate (%s): %d, overall: %d",
        100 * threshold, reduce_axis, report.k_separate, report.k_overall,
    )
    return report
