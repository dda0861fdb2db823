"""Exception hierarchy shared across the package.

Each class maps to one of the CLI exit codes so command handlers can
translate failures uniformly (config -> 2, data -> 3, numerics -> 4,
missing checkpoints -> 5).
"""


class JsccError(Exception):
    """Base class for all package errors."""


class ConfigurationError(JsccError):
    """Invalid run configuration (bad ratio, geometry, weights, flags)."""


class ShapeError(JsccError):
    """Tensor shape violates an operation's contract."""


class ContractError(JsccError):
    """An input violates a declared precondition (e.g. pixel-scale mismatch)."""


class NormalizationError(JsccError):
    """Power normalization of an all-zero symbol vector."""


class IngestionError(JsccError):
    """Dataset files missing, truncated, or undecodable."""


class NumericalError(JsccError):
    """Training aborted on a non-finite loss; carries step diagnostics."""

    def __init__(self, message: str, *, step: int | None = None,
                 diagnostics: dict | None = None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}


class CheckpointError(JsccError):
    """Checkpoint directory unreadable or inconsistent with the run spec."""
