"""Exception types raised across the reconstruction toolkit."""
from typing import List, Optional


class MPFError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(MPFError, ValueError):
    """Raised when two grids or arrays that must agree in shape do not."""


class ZeroReferenceError(MPFError, ZeroDivisionError):
    """Raised when a normalized metric is computed against an all-zero reference."""


class VolumeFormatError(MPFError, ValueError):
    """Raised when an MPFV/MPFS file cannot be decoded."""

    def __init__(self, field: str, message: str):
        """
        Args:
            field: Name of the offending header field or section
            message: Human readable description
        """
        super().__init__(f"{field}: {message}")
        self.field = field


class GeometryError(MPFError, ValueError):
    """Raised when a scan geometry violates its invariants."""


class PoseError(MPFError, ValueError):
    """Raised when a rigid pose is not a proper rotation."""


class ProxSolverError(MPFError, RuntimeError):
    """Raised when the conjugate gradient solver of a proximal map diverges."""

    def __init__(self, message: str, residuals: Optional[List[float]] = None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class AgentError(MPFError, RuntimeError):
    """Raised when a MACE agent fails; tagged with the agent index."""

    def __init__(self, index: int, label: str, cause: Exception):
        super().__init__(f"agent {index} ({label}) failed: {cause}")
        self.index = index
        self.label = label
        self.cause = cause


class MaceSolverError(MPFError, RuntimeError):
    """Raised when a Mann solve aborts; carries the partial convergence report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ExperimentConfigError(MPFError, ValueError):
    """Raised for invalid experiment configuration or phantom specifications."""


class SliceIndexError(MPFError, IndexError):
    """Raised when a slice index falls outside the volume."""
