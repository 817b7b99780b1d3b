"""Exception hierarchy.

Two families matter to callers: :class:`InputError` (bad arguments, schemas,
formulas, files) and :class:`FitError` (the model could not be fitted).
The CLI maps them to exit codes 2 and 3.
"""


class TidyfitError(Exception):
    pass


class InputError(TidyfitError):
    pass


class ArgumentError(InputError, ValueError):
    pass


class SchemaError(InputError, KeyError):
    def __str__(self):
        # KeyError quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class ColumnTypeError(InputError, TypeError):
    pass


class ParseError(InputError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class FormulaSyntaxError(InputError):
    def __init__(self, message, offset=None, text=None):
        if offset is not None:
            message = f"{message} at offset {offset}"
            if text is not None:
                message = f"{message}\n  {text}\n  {' ' * offset}^"
        super().__init__(message)
        self.offset = offset


class DomainError(InputError, ValueError):
    pass


class CombineError(TidyfitError):
    pass


class DegenerateInputError(InputError):
    pass


class FitError(TidyfitError):
    pass


class InsufficientDataError(FitError):
    pass


class SingularDesignError(FitError):
    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class SingularGradientError(FitError):
    pass


class BadStartError(FitError):
    pass


class ConvergenceError(FitError):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class GroupFitError(FitError):
    """A fit failed inside one group of a split-apply-combine run."""

    def __init__(self, message, group=None):
        super().__init__(message)
        self.group = group


class UnsupportedError(InputError):
    """Valid input that asks for something this library deliberately lacks."""
