import json
from pathlib import Path

import numpy as np

from ro_norm.utils._errors import DataError

SCHEMA_VERSION = 1
_DTYPE = "<f8"


def write_container(directory, header, arrays):
    """Write a JSON header and one little-endian float64 blob per array.

    Parameters
    ----------
    directory : str | Path
        Target directory, created if needed.
    header : dict
        JSON-serialisable metadata. The shapes of ``arrays`` are added
        under the ``"arrays"`` key.
    arrays : dict of str to array
        Blobs written as ``<name>.bin`` in row-major order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = dict(header)
    header.setdefault("schema_version", SCHEMA_VERSION)
    header["arrays"] = {}
    for name, array in arrays.items():
        array = np.ascontiguousarray(array, dtype=_DTYPE)
        array.tofile(directory / f"{name}.bin")
        header["arrays"][name] = list(array.shape)
    with open(directory / "header.json", "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
    return directory


def read_container(directory):
    directory = Path(directory)
    header_path = directory / "header.json"
    if not header_path.exists():
        raise DataError(f"No container header found in {directory}")
    with open(header_path) as f:
        header = json.load(f)
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DataError(
            f"Unsupported schema_version {header.get('schema_version')} "
            f"in {header_path}"
        )
    arrays = {}
    for name, shape in header["arrays"].items():
        blob = np.fromfile(directory / f"{name}.bin", dtype=_DTYPE)
        if blob.size != int(np.prod(shape)):
            raise DataError(
                f"Blob {name}.bin holds {blob.size} values, header declares "
                f"shape {shape}"
            )
        arrays[name] = blob.reshape(shape).astype(np.float64)
    return header, arrays
