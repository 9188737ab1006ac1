"""Exception types shared across the package."""


class TreepackError(Exception):
    """Base class for all package errors."""


class ScenarioError(TreepackError):
    """Malformed scenario, profile, or solver configuration."""


class InfeasibleError(TreepackError):
    """A receiver (or overlay node) cannot be reached from the source."""


class OracleScaleError(TreepackError):
    """An exact oracle was invoked on an instance beyond its size guard."""


class EnumerationCapError(TreepackError):
    """Tree enumeration would exceed the caller-supplied cap."""


class CertificateRefused(TreepackError):
    """Certification preconditions do not hold on this instance."""
