"""Exception types shared across the package."""


class CookspaceError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CookspaceError, ValueError):
    """Operand shapes do not conform."""


class DegenerateVectorError(CookspaceError, ValueError):
    """A vector with (near-)zero norm reached a normalization."""


class ContractError(CookspaceError, ValueError):
    """An operation was called outside its documented contract."""


class EmptyInputError(ContractError):
    """A nonempty sequence was required."""


class VocabularyError(CookspaceError, ValueError):
    """A token id falls outside the vocabulary."""


class NumericFaultError(CookspaceError, ArithmeticError):
    """A non-finite value appeared where finite numbers are required."""


class BatchCompositionError(CookspaceError, ValueError):
    """The dataset cannot supply a batch satisfying the pairing guarantees."""


class OracleInvalidError(CookspaceError, RuntimeError):
    """A function handed to the gradient checker is not deterministic."""


class DatasetFormatError(CookspaceError, ValueError):
    """A dataset file is malformed; carries the offending line number."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DatasetIntegrityError(CookspaceError, ValueError):
    """Parsed records violate dataset invariants (e.g. duplicate ids)."""


class ConfigError(CookspaceError, ValueError):
    """A configuration value is invalid or inconsistent."""


class DegenerateRecipeError(CookspaceError, ValueError):
    """An edit would leave a recipe without ingredients or instructions."""
