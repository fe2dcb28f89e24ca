"""Exception types raised across the package.

The CLI maps these onto exit codes, so every module raises from this set.
"""


class QcoptError(Exception):
    """Base class for all package errors."""


class ConnectivityError(QcoptError, ValueError):
    """A gate violates qubit bounds or the nearest-neighbour chain."""


class QubitCapExceeded(QcoptError, ValueError):
    pass


class NotUnitary(QcoptError, ValueError):
    pass


class InjectivityViolation(QcoptError, RuntimeError):
    """Two distinct transformations map onto the same (rule, locus)."""


class StaleTransformation(QcoptError, ValueError):
    """The transformation was enumerated on a different circuit."""


class NotApplicable(QcoptError, ValueError):
    pass


class NoSoftTransformationAvailable(QcoptError, RuntimeError):
    pass


class CapacityExceeded(QcoptError, ValueError):
    pass


class MaskedAction(QcoptError, ValueError):
    pass


class AllMasked(QcoptError, ValueError):
    pass


class NonfiniteLoss(QcoptError, FloatingPointError):
    pass


class TuningFailed(QcoptError, RuntimeError):
    pass


class TooManyNodes(QcoptError, ValueError):
    pass
