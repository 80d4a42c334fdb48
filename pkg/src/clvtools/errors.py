"""Exception hierarchy shared by all clvtools modules."""


class ClvError(Exception):
    """Base class for every error raised by clvtools."""


class AmbientMismatch(ClvError, ValueError):
    pass


class RankDeficient(ClvError):
    """A set of vectors collapsed numerically during orthonormalization.

    ``column_index`` is the (0-based) column whose residual fell below the
    rank tolerance; ``index`` is the orbit index of the failing checkpoint
    when raised from a forward pass.
    """

    def __init__(self, column_index, index=None, message=None):
        self.column_index = column_index
        self.index = index
        if message is None:
            message = f"column {column_index} is linearly dependent on the previous columns"
            if index is not None:
                message += f" (orbit index {index})"
        super().__init__(message)


class NonFiniteValues(ClvError):
    pass


class IllConditionedSplitting(ClvError):
    pass


class OutOfRange(ClvError, IndexError):
    pass


class BadSpec(ClvError, ValueError):
    pass


class OrbitFormatError(ClvError, OSError):
    pass


class SingularRInit(ClvError, ValueError):
    pass


class SingularR(ClvError):
    def __init__(self, checkpoint, message=None):
        self.checkpoint = checkpoint
        super().__init__(message or f"triangular factor at checkpoint {checkpoint} is singular")


class ZeroColumn(ClvError):
    def __init__(self, column_index):
        self.column_index = column_index
        super().__init__(f"coefficient column {column_index} maps to the zero vector")


class NotInvertible(ClvError):
    def __init__(self, index, cond=None):
        self.index = index
        self.cond = cond
        super().__init__(f"generator at orbit index {index} is not invertible (cond={cond:.3g})"
                         if cond is not None else f"generator at orbit index {index} is not invertible")


class EmptyHistory(ClvError):
    pass


class InsufficientData(ClvError):
    pass


class PreconditionUnsatisfiable(ClvError):
    """A randomized lemma instance does not meet the lemma's hypothesis."""

    def __init__(self, record, message=None):
        self.record = record
        super().__init__(message or f"{record.lemma_id}: precondition not met")


class ConfigError(ClvError, ValueError):
    pass
