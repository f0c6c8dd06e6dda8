#
# This file is part of the ecgifoe package.
#


class ECGIError(Exception):
    """
    Base class of every error raised by the package.
    """

    pass


class NumericalError(ECGIError):
    """
    Base class for failures of a numerical method (exit code 3 at the CLI).
    """

    pass


class ConfigError(ECGIError):
    """
    An exception raised when a configuration file or value is invalid.
    """

    pass


class ModelFormatError(ECGIError):
    """
    An exception raised when a regularizer model file cannot be parsed or violates the expert invariants.
    """

    pass


class IoError(ECGIError):
    """
    An exception raised when reading or writing an artifact file fails.
    """

    pass


class MissingArtifacts(ECGIError):
    """
    An exception raised when a benchmark needs a dataset or a model that is not present.
    """

    pass


class GeometryOverlap(ECGIError):
    """
    An exception raised when heart, lung and torso disks violate containment or disjointness.
    """

    pass


class MeshQuality(ECGIError):
    """
    An exception raised when a generated mesh has a triangle angle below the admissible minimum.
    """

    pass


class TopologyError(ECGIError):
    """
    An exception raised when a mesh is not conforming or a boundary does not form a single closed loop.
    """

    pass


class InsufficientResolution(ECGIError):
    """
    An exception raised when the boundary resolution is too coarse for the requested electrode layout.
    """

    pass


class EllipticityError(ECGIError):
    """
    An exception raised when a conductivity tensor is not symmetric positive definite.
    """

    pass


class ShapeMismatch(ECGIError):
    """
    An exception raised when array shapes of fields, observations or operators are inconsistent.
    """

    pass


class ParameterOutOfRange(ECGIError):
    """
    An exception raised when a model parameter lies outside of its admissible range.
    """

    pass


class SolveFailure(NumericalError):
    """
    An exception raised when a linear solve does not reach the required residual.
    """

    pass


class SingularSystem(NumericalError):
    """
    An exception raised when the Dirichlet-reduced stiffness matrix cannot be factorized.
    """

    pass


class CGDivergence(NumericalError):
    """
    An exception raised when conjugate gradients exceed the maximum number of iterations.
    """

    pass


class NonConvergence(NumericalError):
    """
    An exception raised when an iterative method stops at its iteration limit.
    """

    pass


class ZeroIterate(NumericalError):
    """
    An exception raised when the power method keeps producing zero iterates.
    """

    pass


class NonFiniteObjective(NumericalError):
    """
    An exception raised when an objective value or gradient becomes NaN or infinite.
    """

    pass


class BlowUp(NumericalError):
    """
    An exception raised when a cardiac simulation leaves the physiological range.
    """

    pass
