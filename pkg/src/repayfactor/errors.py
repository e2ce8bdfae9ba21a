"""Exception hierarchy shared by every stage."""


class RepayFactorError(Exception):
    """Base class for all toolkit errors."""


class DictionaryError(RepayFactorError):
    pass


class DuplicateError(RepayFactorError):
    pass


class ParseError(RepayFactorError):
    pass


class SchemaError(RepayFactorError):
    pass


class EmptyTableError(RepayFactorError):
    pass


class UnknownVariableError(RepayFactorError):
    pass


class LeakageError(RepayFactorError):
    """Raised when a non-repayment column is requested as the target."""


class DomainError(RepayFactorError):
    pass


class DegenerateTargetError(RepayFactorError):
    pass


class InsufficientDataError(RepayFactorError):
    pass


class RankError(RepayFactorError):
    pass


class ShapeError(RepayFactorError):
    pass


class UnboundedError(RepayFactorError):
    pass


class ConvergenceError(RepayFactorError):
    def __init__(self, message, lambda_index=None, max_change=None):
        super().__init__(message)
        self.lambda_index = lambda_index
        self.max_change = max_change


class FoldError(RepayFactorError):
    pass


class FoldFitError(RepayFactorError):
    def __init__(self, fold, cause):
        super().__init__(f"fold {fold}: {cause}")
        self.fold = fold
        self.cause = cause


class ConfigError(RepayFactorError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
