"""Exception hierarchy shared by all stages."""

from __future__ import annotations


class P4CEPError(Exception):
    """Base class for every error raised by the toolkit."""


class RuleError(P4CEPError):
    """An error attributable to a location in rule source text."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"{self.line}:{self.col}: {self.message}"


class LexicalError(RuleError):
    pass


class RuleSyntaxError(RuleError):
    pass


class DuplicateNameError(RuleError):
    pass


class RuleValidationError(RuleError):
    pass


class UnresolvedFieldError(RuleValidationError):
    pass


class UnresolvedWindowError(RuleValidationError):
    pass


class AggregateError(RuleValidationError):
    """Aggregation function applied to a target that cannot support it."""


class HeaderSpecError(P4CEPError):
    pass


class ProgramFormatError(P4CEPError):
    """Malformed serialized program text."""


class InvalidProgramError(P4CEPError):
    pass


class WarmUpError(P4CEPError):
    """Average requested before the window has been filled once."""


class IngestError(P4CEPError):
    """A packet could not be processed; the engine state is left untouched."""


class MissingFieldError(IngestError):
    pass


class FieldRangeError(IngestError):
    pass


class TableUpdateError(P4CEPError):
    pass


class TraceFormatError(P4CEPError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row
