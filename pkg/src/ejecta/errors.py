"""Exception hierarchy for the ejecta solver."""


class EjectaError(Exception):
    """Base class for all solver errors."""


class GeometryError(EjectaError):
    pass


class DegenerateCell(GeometryError):
    pass


class NonManifoldEdge(GeometryError):
    pass


class DanglingVertex(GeometryError):
    pass


class TangledMesh(GeometryError):
    """A cell collapsed or inverted during mesh motion."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class NonPhysicalState(EjectaError):
    """Nonpositive density, pressure or internal energy."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class DegenerateFan(EjectaError):
    pass


class SingularNodalMatrix(EjectaError):
    pass


class ZeroViscosity(EjectaError):
    pass


class LostParticle(EjectaError):
    def __init__(self, message, particle=None):
        super().__init__(message)
        self.particle = particle


class NoConvergence(EjectaError):
    pass


class ConfigError(EjectaError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
