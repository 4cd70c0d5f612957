import logging
import time
from pathlib import Path

import numpy as np
import pandas as pd
import torch
from sklearn.preprocessing import StandardScaler
from tqdm import tqdm

from ro_norm.utils import (
    DataError,
    EvalReport,
    NumericsError,
    MappingKind,
    PointSelection,
    SnapshotTensor,
    assemble_operators,
    compute_lbo_basis,
    compute_pod_basis,
    fourier_time_basis,
    get_dataloader,
    load_basis,
    save_basis,
    e_l2,
    mme,
    read_container,
    write_container,
    relative_l2_loss,
)
from ro_norm.utils.architecture import (
    NORM,
    ReducedFcOperator,
    ReducedOrderOperator,
    PcaNetOperator,
    parameter_count,
)

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "lr", "train_loss", "test_e_l2", "test_mme", "wall_clock_s"]
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

__all__ = [
    "relative_l2_loss",
    "backward",
    "make_optimizer",
    "adam_step",
    "fit",
    "train_increase",
    "train_decrease",
    "train_ro_norm",
    "build_bases",
    "build_reduction_basis",
    "standardize_inputs",
    "evaluate",
    "save_checkpoint",
    "load_checkpoint",
]


def backward(operator, inputs, targets):
    """Loss of the full pipeline and its gradient for every parameter.

    Parameters
    ----------
    operator : ReducedOrderOperator | ReducedFcOperator | PcaNetOperator
    inputs : tensor
        Encoded network inputs.
    targets : tensor
        Encoded targets (fields, or weights for offline training).

    Returns
    -------
    loss : float
    grads : dict of str to tensor
        Gradients keyed like ``operator.named_parameters()``.
    """
    operator.zero_grad()
    loss = operator.loss(inputs, targets)
    if not torch.isfinite(loss):
        raise NumericsError(f"non-finite loss {loss.item()}")
    loss.backward()
    grads = {
        name: p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
        for name, p in operator.named_parameters()
    }
    return loss.item(), grads


def make_optimizer(params, lr):
    return torch.optim.Adam(params, lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def adam_step(params, grads, optimizer=None, lr=0.01):
    """One Adam update of ``params`` with the given gradients.

    The optimizer holds the moment estimates and the step counter; pass the
    returned optimizer back to continue from the same state.
    """
    params = list(params)
    if optimizer is None:
        optimizer = make_optimizer(params, lr)
    for p, g in zip(params, grads):
        p.grad = torch.as_tensor(g, dtype=p.dtype).clone()
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()
    return optimizer


def fit(operator, inputs, targets, config, test=None, verbose=True):
    """Adam with step decay on the relative L2 loss.

    Parameters
    ----------
    operator : ReducedOrderOperator | ReducedFcOperator | PcaNetOperator
    inputs, targets : tensor
        Encoded training pairs.
    config : TrainConfig
    test : OperatorDataset | None
        Evaluated after every epoch when given.
    verbose : bool
        Show a progress bar.

    Returns
    -------
    history : DataFrame
        One row per epoch with the ``LOG_COLUMNS``.
    """
    optimizer = make_optimizer(operator.parameters(), config.lr)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=config.step_lr_every, gamma=config.step_lr_gamma
    )
    dataloader = get_dataloader(inputs, targets, config.batch_size, config.seed)

    history = []
    time_start = time.time()
    for epoch in tqdm(range(config.epochs), disable=not verbose):
        lr = optimizer.param_groups[0]["lr"]
        operator.train()
        train_loss = np.zeros(len(dataloader))
        for i, (batch_x, batch_y) in enumerate(dataloader):
            optimizer.zero_grad()
            loss_batch = operator.loss(batch_x, batch_y)
            if not torch.isfinite(loss_batch):
                raise NumericsError(f"non-finite training loss at epoch {epoch}")
            loss_batch.backward()
            optimizer.step()
            train_loss[i] = loss_batch.item()
        scheduler.step()

        operator.eval()
        test_e_l2 = test_mme = np.nan
        if test is not None:
            pred = operator.predict(test.a)
            test_e_l2 = e_l2(pred, test.u)
            test_mme = mme(pred, test.u)
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_loss": train_loss.mean(),
                "test_e_l2": test_e_l2,
                "test_mme": test_mme,
                "wall_clock_s": time.time() - time_start,
            }
        )
        if epoch % config.log_every == 0 or epoch == config.epochs - 1:
            logger.info(
                "Ep: %d Loss: %.4e TestEL2: %.4e TestMME: %.4e Lr: %.2e Time: %.1f",
                epoch, history[-1]["train_loss"], test_e_l2, test_mme, lr,
                history[-1]["wall_clock_s"],
            )
    return pd.DataFrame(history, columns=LOG_COLUMNS)


def _domain_basis(domain, k, mesh, n_t, dt, cache_dir=None):
    """Laplacian eigenbasis of the mesh or Fourier basis of the time axis."""
    if domain == "time":
        return fourier_time_basis(n_t, k, n_t * dt)
    if mesh is None:
        raise DataError("a mesh is required for spatial intrinsic bases")
    checksum = mesh.checksum()
    cached = None if cache_dir is None else Path(cache_dir) / f"lbo-{checksum}-{k}"
    if cached is not None and (cached / "header.json").exists():
        return load_basis(cached, checksum)
    stiffness, lumped_mass = assemble_operators(mesh)
    basis = compute_lbo_basis(stiffness, lumped_mass, k, checksum)
    if cached is not None:
        save_basis(basis, cached)
    return basis


def build_reduction_basis(dataset, config, mesh=None, cache_dir=None):
    """Basis of the reduced axis.

    Computed from the training outputs (increase kinds) or inputs (decrease
    kinds) for the ``pod`` family; the ``intrinsic`` family uses the
    Fourier or Laplacian basis of that axis instead.
    """
    kind = dataset.kind
    if config.basis_family == "pod":
        reduced = dataset.u if kind.is_increase else dataset.a
        return compute_pod_basis(
            SnapshotTensor(reduced, dataset.dt), kind.reduce_axis, config.truncated_modes
        )
    return _domain_basis(
        kind.reduce_axis, config.truncated_modes, mesh, dataset.n_t, dataset.dt, cache_dir
    )


def build_bases(dataset, config, mesh=None, cache_dir=None):
    """Network basis and reduction basis of an RO-NORM model."""
    network_basis = _domain_basis(
        dataset.kind.network_domain, config.lmodes, mesh, dataset.n_t, dataset.dt, cache_dir
    )
    return network_basis, build_reduction_basis(dataset, config, mesh, cache_dir)


def standardize_inputs(operator, inputs):
    """Fit per-channel standardization on training inputs and apply it."""
    c = inputs.shape[-1]
    scaler = StandardScaler().fit(inputs.reshape(-1, c).numpy())
    operator.set_standardization(scaler.mean_, scaler.scale_)
    return (inputs - operator.input_mean) / operator.input_scale


def train_ro_norm(dataset, config, mesh=None, test=None, cache_dir=None, verbose=True):
    """Build and train an RO-NORM model on any mapping kind.

    Returns
    -------
    operator : ReducedOrderOperator
    history : DataFrame
    """
    kind = dataset.kind
    network_basis, reduction_basis = build_bases(dataset, config, mesh, cache_dir)
    c_a, c_u = dataset.a.shape[-1], dataset.u.shape[-1]
    if kind.is_increase:
        c_in, c_out = c_a, c_u * reduction_basis.k
    else:
        c_in, c_out = c_a * reduction_basis.k, c_u
    network = NORM(
        c_in,
        c_out,
        width=config.width,
        d_proj=config.d_proj,
        n_layers=config.n_layers,
        n_modes=network_basis.k,
        activation=config.activation,
        seed=config.seed,
        check_finite=True,
    )
    operator = ReducedOrderOperator(
        kind, network, network_basis, reduction_basis, c_u, config.reconstruction
    )
    inputs = operator.encode_inputs(dataset.a)
    if config.normalize:
        inputs = standardize_inputs(operator, inputs)
    targets = operator.encode_targets(dataset.u)
    logger.info(
        "RO-NORM %s: %d parameters, %s reduction basis d=%d, %d network modes",
        kind.value, parameter_count(operator), reduction_basis.kind,
        reduction_basis.k, network_basis.k,
    )
    history = fit(operator, inputs, targets, config, test, verbose)
    return operator, history


def train_increase(dataset, config, mesh=None, test=None, cache_dir=None, verbose=True):
    """Train on ``a(x) -> u(x, t)`` or ``a(t) -> u(x, t)`` data.

    The network predicts the weight field of the outputs. With
    ``reconstruction="online"`` the loss is taken on the decoded fields,
    with ``"offline"`` on the encoded training outputs.
    """
    if not MappingKind(dataset.kind).is_increase:
        raise DataError(f"train_increase got a {dataset.kind.value} dataset")
    return train_ro_norm(dataset, config, mesh, test, cache_dir, verbose)


def train_decrease(dataset, config, mesh=None, test=None, cache_dir=None, verbose=True):
    """Train on ``a(x, t) -> u(x)`` or ``a(x, t) -> u(t)`` data.

    The inputs are encoded once along the reduced axis and the network maps
    the resulting weight field to the outputs.
    """
    if MappingKind(dataset.kind).is_increase:
        raise DataError(f"train_decrease got a {dataset.kind.value} dataset")
    return train_ro_norm(dataset, config, mesh, test, cache_dir, verbose)


def evaluate(operator, dataset, wall_clock_s=0.0, selection=PointSelection(),
             threshold=None, **meta):
    """Metrics of ``operator`` on a held-out split."""
    pred = operator.predict(dataset.a)
    return EvalReport.from_predictions(
        pred,
        dataset.u,
        wall_clock_s=wall_clock_s,
        n_params=parameter_count(operator),
        selection=selection,
        threshold=threshold,
        **meta,
    )


_OPERATORS = {
    ReducedOrderOperator.method: ReducedOrderOperator,
    PcaNetOperator.method: PcaNetOperator,
    ReducedFcOperator.method: ReducedFcOperator,
}


def save_checkpoint(operator, directory, **meta):
    """Write the operator's parameters, bases and metadata.

    Parameter tensors are stored in ``named_parameters`` order, listed in
    the header under ``"parameters"``.
    """
    header, arrays = operator.checkpoint()
    header.update(meta)
    names = []
    for name, p in operator.named_parameters():
        names.append(name)
        arrays[f"param.{name}"] = p.detach().numpy()
    header["parameters"] = names
    return write_container(directory, header, arrays)


def load_checkpoint(directory):
    header, arrays = read_container(directory)
    if header.get("method") not in _OPERATORS:
        raise DataError(f"{directory}: unknown checkpoint method {header.get('method')!r}")
    operator = _OPERATORS[header["method"]].from_checkpoint(header, arrays)
    state = {name: torch.as_tensor(arrays[f"param.{name}"]) for name in header["parameters"]}
    operator.load_state_dict(state, strict=False)
    missing = {n for n, _ in operator.named_parameters()} - set(state)
    if missing:
        raise DataError(f"{directory}: checkpoint misses parameters {sorted(missing)}")
    return operator, header
