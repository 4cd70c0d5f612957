import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

from ro_norm.utils._errors import DataError, ShapeError
from ro_norm.utils._io import read_container, write_container
from ro_norm.utils._mesh import load_mesh, save_mesh

logger = logging.getLogger(__name__)


class MappingKind(str, Enum):
    """The four unequal-domain mapping categories.

    ``increase_*`` kinds add a domain factor on the output side,
    ``decrease_*`` kinds remove one from the input side.
    """

    INCREASE_FROM_SPACE = "increase_from_space"  # a(x) -> u(x, t)
    INCREASE_FROM_TIME = "increase_from_time"  # a(t) -> u(x, t)
    DECREASE_TO_SPACE = "decrease_to_space"  # a(x, t) -> u(x)
    DECREASE_TO_TIME = "decrease_to_time"  # a(x, t) -> u(t)

    @property
    def is_increase(self):
        return self.value.startswith("increase")

    @property
    def network_domain(self):
        """Domain the same-domain network runs on, ``"space"`` or ``"time"``."""
        return self.value.rsplit("_", 1)[-1]

    @property
    def reduce_axis(self):
        """Axis removed by the unequal-domain encoder."""
        return "time" if self.network_domain == "space" else "space"

    def check_shapes(self, a_shape, u_shape):
        """Raise ``ShapeError`` unless ``(N, n_x, n_t, c)`` shapes fit the kind."""
        if len(a_shape) != 4 or len(u_shape) != 4:
            raise ShapeError(f"a and u must be 4-D, got {a_shape} and {u_shape}")
        if a_shape[0] != u_shape[0]:
            raise ShapeError(f"{a_shape[0]} inputs for {u_shape[0]} outputs")
        _, ax, at, _ = a_shape
        _, ux, ut, _ = u_shape
        expected = {
            MappingKind.INCREASE_FROM_SPACE: at == 1 and ax == ux,
            MappingKind.INCREASE_FROM_TIME: ax == 1 and at == ut,
            MappingKind.DECREASE_TO_SPACE: ut == 1 and ax == ux,
            MappingKind.DECREASE_TO_TIME: ux == 1 and at == ut,
        }[self]
        if not expected:
            raise ShapeError(
                f"shapes a{tuple(a_shape)} and u{tuple(u_shape)} do not describe "
                f"a {self.value} mapping"
            )


@dataclass(eq=False)
class OperatorDataset:
    """Input/output function pairs of one mapping kind.

    Parameters
    ----------
    kind : MappingKind
        Mapping category, checked against the array shapes.
    a : array, shape=(N, n_x, n_t, c_a)
        Input functions, with a singleton axis for a missing domain.
    u : array, shape=(N, n_x, n_t, c_u)
        Output functions.
    dt : float
        Time step of the time axis.
    header : dict
        Provenance recorded at generation (case, mesh checksum, seeds...).
    """

    kind: MappingKind
    a: np.ndarray
    u: np.ndarray
    dt: float = 1.0
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = MappingKind(self.kind)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.kind.check_shapes(self.a.shape, self.u.shape)
        if not (np.isfinite(self.a).all() and np.isfinite(self.u).all()):
            raise DataError("dataset contains non-finite values")

    def __len__(self):
        return len(self.a)

    @property
    def n_x(self):
        return max(self.a.shape[1], self.u.shape[1])

    @property
    def n_t(self):
        return max(self.a.shape[2], self.u.shape[2])

    @property
    def case(self):
        return self.header.get("case")


def save_dataset(dataset, directory):
    header = dict(dataset.header)
    header.update(
        mapping_kind=dataset.kind.value,
        N=len(dataset),
        n_x=dataset.n_x,
        n_t=dataset.n_t,
        channels=[dataset.a.shape[-1], dataset.u.shape[-1]],
        dt=dataset.dt,
    )
    return write_container(directory, header, {"a": dataset.a, "u": dataset.u})


def load_dataset(directory):
    header, arrays = read_container(directory)
    try:
        kind = MappingKind(header["mapping_kind"])
    except (KeyError, ValueError):
        raise DataError(
            f"{directory}: missing or unknown mapping_kind "
            f"{header.get('mapping_kind')!r}"
        )
    if "a" not in arrays or "u" not in arrays:
        raise DataError(f"{directory}: dataset needs both a.bin and u.bin")
    return OperatorDataset(kind, arrays["a"], arrays["u"], header["dt"], header)


def save_splits(data_dir, train, test, mesh=None):
    """Write ``train/`` and ``test/`` containers and a copy of the mesh."""
    data_dir = Path(data_dir)
    save_dataset(train, data_dir / "train")
    save_dataset(test, data_dir / "test")
    if mesh is not None:
        save_mesh(mesh, data_dir / "mesh.txt")
    logger.info(
        "Wrote %d train / %d test samples to %s", len(train), len(test), data_dir
    )
    return data_dir


def load_splits(data_dir):
    data_dir = Path(data_dir)
    if not (data_dir / "train" / "header.json").exists():
        raise DataError(f"No dataset found in {data_dir}")
    train = load_dataset(data_dir / "train")
    test = load_dataset(data_dir / "test")
    if train.kind != test.kind:
        raise DataError(f"train split is {train.kind.value}, test is {test.kind.value}")
    mesh_path = data_dir / "mesh.txt"
    mesh = load_mesh(mesh_path) if mesh_path.exists() else None
    return train, test, mesh


def get_dataloader(inputs, targets, batch_size, seed=0, shuffle=True):
    """Seeded loader over ``(input, target)`` tensor pairs.

    The last partial batch is kept.
    """
    generator = torch.Generator()
    generator.manual_seed(seed)
    dataset = TensorDataset(torch.as_tensor(inputs), torch.as_tensor(targets))
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        drop_last=False,
        generator=generator,
    )
