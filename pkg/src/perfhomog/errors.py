"""Exception hierarchy shared by all perfhomog modules."""


class PerfHomogError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(PerfHomogError, ValueError):
    pass


# geometry
class GeometryError(PerfHomogError):
    pass


class OverlapError(GeometryError):
    pass


class DisconnectedError(GeometryError):
    pass


class MeshFailure(GeometryError):
    pass


class AlignmentError(GeometryError):
    pass


# elasticity
class SymmetryError(PerfHomogError):
    pass


class EllipticityError(PerfHomogError):
    pass


class QuadratureError(PerfHomogError):
    pass


class ConstraintError(PerfHomogError):
    pass


class NonConvergence(PerfHomogError):
    pass


class SingularPencil(PerfHomogError):
    pass


# pipeline / probe
class GridTooCoarse(PerfHomogError):
    pass


class LookupFailure(PerfHomogError):
    pass


class RankDeficiency(PerfHomogError):
    pass


class ConfigError(PerfHomogError):
    """Invalid run configuration; ``line`` points into the source file when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}:"
        if line is not None:
            prefix += f"{line}:"
        super().__init__(f"{prefix} {message}".strip() if prefix else message)
