import numpy as np


class LatticeError(ValueError):
    """Lattice mismatch, unsupported geometry kind or site cap exceeded."""


class SingularOperatorError(np.linalg.LinAlgError):
    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DegreeCapError(ValueError):
    pass


class MissingCoincidenceError(ValueError):
    """Raised when a local functional is contracted with a kernel whose diagonal is singular."""


class ExtensionRequiredError(ValueError):
    """Overlapping local arguments need Hadamard/extension data."""


class IllConditionedFitError(ValueError):
    pass


class ConfigError(ValueError):
    pass
