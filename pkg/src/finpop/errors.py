"""Exception types raised across the package."""


class ParameterDomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class AdmissibilityError(ParameterDomainError):
    """Margins violate ``eps_a / eps_r + eps_a <= 1/2``."""


class EnumerationCapError(ParameterDomainError):
    """Population too large for the exact enumeration search."""


class CertificationError(RuntimeError):
    """No tuning factor in the probed range certifies the stage plan."""

    def __init__(self, message, worst_value=None, worst_M=None):
        super().__init__(message)
        self.worst_value = worst_value
        self.worst_M = worst_M
