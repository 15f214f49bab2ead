"""Exception types shared across the package."""


class SteerageError(Exception):
    """Base class for package errors."""


class ResourceLimitError(SteerageError):
    """A requested computation exceeds a configured size cap."""


class SolverFailureError(SteerageError):
    """The interior-point solver could not reach the requested accuracy."""


class CertificateUnavailableError(SteerageError):
    """No meaningful dual certificate exists for this solution."""


class DegenerateFilterError(SteerageError):
    """A local filter annihilated the state (zero post-filter trace)."""
