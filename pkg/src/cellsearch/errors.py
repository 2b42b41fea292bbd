"""Exception types shared across the toolkit."""


class CellSearchError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(CellSearchError):
    """Invalid configuration value or file."""


class ShapeError(CellSearchError):
    """Tensor shape incompatible with the requested operation."""


class InvalidOperationError(CellSearchError):
    """Unknown candidate operation."""


class NumericError(CellSearchError):
    """Non-finite values or a failed numerical routine."""


class ContractError(CellSearchError):
    """A documented precondition was violated by the caller."""


class GenotypeParseError(CellSearchError):
    """Malformed genotype file; message carries line/field diagnostics."""


class GenotypeVersionError(GenotypeParseError):
    """Genotype file declares an unsupported format version."""


class DataValidationError(CellSearchError):
    """Dataset files inconsistent with their manifest."""


class DivergenceError(CellSearchError):
    """Training produced a non-finite loss.

    Carries the epoch and batch index so sweep logs can pinpoint the
    failing step.
    """

    def __init__(self, message, epoch=None, batch_index=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch_index = batch_index
