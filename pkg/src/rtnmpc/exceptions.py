"""Exception hierarchy shared across the toolkit."""


class RtnMpcError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(RtnMpcError, ValueError):
    """Invalid configuration, mismatched dimensions or variants."""


class InputDomainError(RtnMpcError, ValueError):
    """An input violates the documented domain (e.g. non-unit quaternion)."""


class UnsupportedOperationError(RtnMpcError, NotImplementedError):
    """The requested operation is not defined for this model."""


class PropagationError(RtnMpcError, FloatingPointError):
    """Non-finite values appeared while integrating the dynamics."""

    def __init__(self, message, node=None):
        if node is not None:
            message = f"{message} (shooting node {node})"
        super().__init__(message)
        self.node = node


class TrainingError(RtnMpcError, RuntimeError):
    """Training diverged or could not proceed."""


class QpSolveError(RtnMpcError, RuntimeError):
    """The QP could not be solved; carries the fallback command."""

    def __init__(self, message, status=None, fallback_command=None):
        super().__init__(message)
        self.status = status
        self.fallback_command = fallback_command
