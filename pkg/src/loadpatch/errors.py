"""Exception hierarchy. Every pipeline failure derives from LoadpatchError."""


class LoadpatchError(Exception):
    pass


class ParseError(LoadpatchError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(LoadpatchError, ValueError):
    pass


class EmptySeriesError(LoadpatchError, ValueError):
    pass


class EmptyDatasetError(LoadpatchError, ValueError):
    pass


class DegenerateRangeError(LoadpatchError, ValueError):
    pass


class RangeError(LoadpatchError, ValueError):
    pass


class CodecError(LoadpatchError, ValueError):
    """Malformed ternary word. ``index`` is the token index inside a series, if any."""

    def __init__(self, message: str, word: str | None = None,
                 position: int | None = None, index: int | None = None):
        self.reason = message
        self.word = word
        self.position = position
        self.index = index
        parts = [message]
        if index is not None:
            parts.append(f"token {index}")
        if word is not None:
            parts.append(f"word {word!r}")
        if position is not None:
            parts.append(f"char {position}")
        super().__init__(", ".join(parts))


class DatasetValidationError(LoadpatchError, ValueError):
    pass


class DatasetReadError(LoadpatchError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StorageError(LoadpatchError, OSError):
    pass


class ProviderError(LoadpatchError):
    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class StubLookupError(LoadpatchError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class PreconditionError(LoadpatchError, ValueError):
    pass


class CapacityError(LoadpatchError, ValueError):
    def __init__(self, message: str, available: int, requested: int):
        self.available = available
        self.requested = requested
        super().__init__(f"{message}: requested {requested}, available {available}")


class DependencyError(LoadpatchError):
    pass


class PlanValidationError(LoadpatchError, ValueError):
    pass


class RestorationFailed(LoadpatchError):
    """Completion could not be turned into a 16-point segment."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class UndefinedMetricError(LoadpatchError, ValueError):
    pass


class ShapeError(LoadpatchError, ValueError):
    pass


class EmptyReportError(LoadpatchError, ValueError):
    pass
