"""Exception hierarchy shared by all modules."""


class VMCError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(VMCError, ValueError):
    """Invalid lattice extents."""


class UnsupportedDimensionError(GeometryError):
    pass


class TranslationError(VMCError, IndexError):
    pass


class ShapeError(VMCError, ValueError):
    """Array dimensions do not match the lattice or parameter layout."""


class ConfigError(VMCError, ValueError):
    pass


class SizeError(VMCError, ValueError):
    """Problem exceeds the brute-force enumeration cap."""


class InsufficientSamplesError(VMCError, ValueError):
    pass


class MissingFieldError(VMCError, ValueError):
    pass


class ZeroAmplitudeError(VMCError, FloatingPointError):
    """The wavefunction vanishes at the requested configuration."""


class UnsupportedModelError(VMCError, ValueError):
    pass


class DataError(VMCError, ValueError):
    """Non-finite estimator inputs."""


class SingularPreconditionerError(VMCError, ArithmeticError):
    pass


class NotPositiveDefiniteError(VMCError, ValueError):
    """The rate bound is only defined at positive definite Hessians."""


class ConvergenceError(VMCError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
