"""Exception hierarchy. Each family maps onto a CLI exit code."""


class WarmFoldError(Exception):
    exit_code = 1


class DataError(WarmFoldError):
    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyInputError(DataError):
    pass


class DegenerateSplitError(DataError):
    pass


class DimensionError(DataError):
    pass


class ColdUserError(DataError):
    """Raised when a user has no interactions, so beta_u is undefined."""


class CorruptFileError(DataError):
    pass


class ChecksumError(CorruptFileError):
    pass


class NumericError(WarmFoldError):
    exit_code = 3


class TrainingDivergedError(NumericError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


class FoldInDivergedError(NumericError):
    def __init__(self, step, norm):
        super().__init__(f"SGD fold-in diverged at step {step} (|e|={norm:.3g})")
        self.step = step


class PlanBuildError(NumericError):
    pass


class FingerprintError(WarmFoldError):
    exit_code = 4


class StalePlanError(FingerprintError):
    pass


class NumericalWarning(RuntimeWarning):
    """Emitted for recoverable numerical conditions (rank truncation, ridge solves)."""
