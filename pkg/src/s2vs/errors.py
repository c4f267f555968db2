"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map it to a distinct
process status without a lookup table.
"""


class S2VSError(Exception):
    exit_code = 1


class ConfigError(S2VSError, ValueError):
    exit_code = 3


class IngestError(S2VSError):
    exit_code = 10


class EmptyVideoError(IngestError):
    exit_code = 11


class FormatError(S2VSError):
    exit_code = 12


class SingularCovarianceError(S2VSError, ArithmeticError):
    exit_code = 20


class EmptyInputError(S2VSError, ValueError):
    exit_code = 21


class DimensionError(S2VSError, ValueError):
    exit_code = 22


class NoPositivesError(S2VSError, ValueError):
    exit_code = 30


class RowWithoutNegativesError(S2VSError, ValueError):
    exit_code = 31


class InsufficientCorpusError(S2VSError):
    exit_code = 40


class NonFiniteLossError(S2VSError, FloatingPointError):
    exit_code = 41


class QueryWithoutPositivesError(S2VSError, ValueError):
    exit_code = 50


class ConsistencyError(S2VSError, ValueError):
    exit_code = 51
