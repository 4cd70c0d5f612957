from ._errors import (
    RONormError,
    ConfigError,
    DataError,
    ShapeError,
    MeshError,
    MeshParseError,
    MeshIndexError,
    DegenerateTriangleError,
    DisconnectedMeshError,
    NumericsError,
)
from ._io import read_container, write_container
from ._mesh import TriMesh, load_mesh, save_mesh, assemble_operators
from ._spectral import (
    EigenBasis,
    compute_lbo_basis,
    fourier_time_basis,
    project,
    reconstruct,
    save_basis,
    load_basis,
)
from ._reduction import (
    SnapshotTensor,
    WeightField,
    compute_pod_basis,
    energy_truncation,
    encode_unequal,
    decode_unequal,
)
from ._dataset import (
    MappingKind,
    OperatorDataset,
    save_dataset,
    load_dataset,
    save_splits,
    load_splits,
    get_dataloader,
)
from ._datagen import (
    CASE_KINDS,
    GrfSpec,
    PdeRun,
    LayoutSpec,
    sample_grf,
    sample_layout,
    solve_heat,
    solve_wave,
    max_stable_dt,
    build_dataset,
)
from ._metrics import (
    relative_l2_loss,
    e_l2,
    mme,
    error_histogram,
    max_error_distribution,
    PointSelection,
    EvalReport,
    aggregate_reports,
)

__all__ = [
    "RONormError",
    "ConfigError",
    "DataError",
    "ShapeError",
    "MeshError",
    "MeshParseError",
    "MeshIndexError",
    "DegenerateTriangleError",
    "DisconnectedMeshError",
    "NumericsError",
    "read_container",
    "write_container",
    "TriMesh",
    "load_mesh",
    "save_mesh",
    "assemble_operators",
    "EigenBasis",
    "compute_lbo_basis",
    "fourier_time_basis",
    "project",
    "reconstruct",
    "save_basis",
    "load_basis",
    "SnapshotTensor",
    "WeightField",
    "compute_pod_basis",
    "energy_truncation",
    "encode_unequal",
    "decode_unequal",
    "MappingKind",
    "OperatorDataset",
    "save_dataset",
    "load_dataset",
    "save_splits",
    "load_splits",
    "get_dataloader",
    "CASE_KINDS",
    "GrfSpec",
    "PdeRun",
    "LayoutSpec",
    "sample_grf",
    "sample_layout",
    "solve_heat",
    "solve_wave",
    "max_stable_dt",
    "build_dataset",
    "relative_l2_loss",
    "e_l2",
    "mme",
    "error_histogram",
    "max_error_distribution",
    "PointSelection",
    "EvalReport",
    "aggregate_reports",
]
