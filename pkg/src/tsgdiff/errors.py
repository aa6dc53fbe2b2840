"""Exception hierarchy. Every error carries a stable ``code`` used as the CLI prefix."""


class TSGDiffError(Exception):
    code = "TSGDiffError"


class MissingFile(TSGDiffError):
    code = "MissingFile"


class ParseError(TSGDiffError):
    code = "ParseError"

    def __init__(self, row, col, message=""):
        self.row = row
        self.col = col
        super().__init__(message or f"cannot parse cell at row {row}, column {col}")


class NonFinite(TSGDiffError):
    code = "NonFinite"

    def __init__(self, row, col):
        self.row = row
        self.col = col
        super().__init__(f"non-finite value at row {row}, column {col}")


class EmptyTable(TSGDiffError):
    code = "EmptyTable"


class DimensionMismatch(TSGDiffError, ValueError):
    code = "DimensionMismatch"


class ShapeMismatch(TSGDiffError, ValueError):
    code = "ShapeMismatch"


class WindowTooLarge(TSGDiffError, ValueError):
    code = "WindowTooLarge"


class WindowTooShort(TSGDiffError, ValueError):
    code = "WindowTooShort"


class InvalidRange(TSGDiffError, ValueError):
    code = "InvalidRange"


class StepOutOfRange(TSGDiffError, IndexError):
    code = "StepOutOfRange"


class NonFiniteLoss(TSGDiffError, FloatingPointError):
    code = "NonFiniteLoss"


class EmptySampleSet(TSGDiffError, ValueError):
    code = "EmptySampleSet"


class InsufficientData(TSGDiffError, ValueError):
    code = "InsufficientData"


class CorruptWeights(TSGDiffError):
    code = "CorruptWeights"


class DigestMismatch(TSGDiffError):
    code = "DigestMismatch"


class ConfigError(TSGDiffError, ValueError):
    code = "ConfigError"


class IoError(TSGDiffError, OSError):
    code = "IoError"
