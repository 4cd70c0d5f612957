class RONormError(Exception):
    """Base class of every error raised by ro_norm."""

    exit_code = 1


class ConfigError(RONormError, ValueError):
    """Invalid configuration, argument or requested size."""

    exit_code = 2


class DataError(RONormError, ValueError):
    """Missing, corrupt or inconsistent data."""

    exit_code = 3


class ShapeError(DataError):
    """Dimension mismatch between a field and a basis or network."""


class MeshError(DataError):
    pass


class MeshParseError(MeshError):
    pass


class MeshIndexError(MeshError):
    pass


class DegenerateTriangleError(MeshError):
    pass


class DisconnectedMeshError(MeshError):
    pass


class NumericsError(RONormError, ArithmeticError):
    """Eigensolver failure, non-finite loss or activation, unstable step."""

    exit_code = 4
