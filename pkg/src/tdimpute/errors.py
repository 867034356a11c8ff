"""Exception and warning types shared across the package."""


class TdimputeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(TdimputeError):
    """Invalid or inconsistent run configuration."""


class DataError(TdimputeError):
    """Base class for malformed or unusable input data."""


class ShapeMismatch(DataError):
    """Two panel-shaped objects disagree on patients, rows, or columns."""


class IncompleteEstimate(DataError):
    """An estimate panel is missing a value where the mask requires one."""


class MalformedRow(DataError):
    def __init__(self, line_no, reason):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class UnknownVariable(DataError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"variable {name!r} is not in the declared variable set")


class NonFiniteValue(DataError):
    """A record carries NaN or infinity as its measurement value."""


class EmptyCohort(DataError):
    """No records survive ingestion."""


class AllMissingColumn(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} has no observed values")


class EmptyInput(DataError):
    """A metric was called on zero elements."""


class ZeroRange(DataError):
    """Normalized error is undefined: the reference range is zero."""


class InsufficientObservations(DataError):
    def __init__(self, patient_id, needed, available):
        self.patient_id = patient_id
        super().__init__(
            f"patient {patient_id!r} has {available} usable rows, needs {needed}"
        )


class SingleClass(DataError):
    """A binary-classification routine received only one label value."""


class FoldDegenerate(DataError):
    """A cross-validation fold lacks one of the two classes."""


class NonFiniteFeature(DataError):
    """A classifier feature matrix contains NaN or infinity."""


class NumericalError(TdimputeError):
    """Base class for numerical failures."""


class SingularSystem(NumericalError):
    """An unregularized linear system has no unique solution."""


class DomainError(NumericalError):
    """A numeric argument lies outside the function's domain."""


class DegenerateVariableWarning(UserWarning):
    """A variable has zero variance; its scale was clamped to 1."""
