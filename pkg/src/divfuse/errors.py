"""Exception hierarchy shared by every pipeline stage."""


class DivfuseError(Exception):
    """Base class for all errors raised by divfuse."""

    stage = None


# ingest

class MissingFile(DivfuseError):
    def __init__(self, path):
        super().__init__(f"file not found: {path}")
        self.path = str(path)


class ParseError(DivfuseError):
    def __init__(self, line, reason, col=None):
        where = f"line {line}" if col is None else f"row {line}, col {col}"
        super().__init__(f"parse error at {where}: {reason}")
        self.line = line
        self.col = col
        self.reason = reason


class InvalidManifest(DivfuseError):
    def __init__(self, field, reason=""):
        super().__init__(f"invalid manifest field {field!r}" + (f": {reason}" if reason else ""))
        self.field = field


class NonFiniteValue(DivfuseError):
    def __init__(self, row, col):
        super().__init__(f"non-finite value at row {row}, col {col}")
        self.row = row
        self.col = col


class EmptyFile(DivfuseError):
    pass


class UnsupportedFormat(DivfuseError):
    def __init__(self, code):
        super().__init__(f"unsupported WFDB storage format {code}")
        self.code = code


class HeaderDataMismatch(DivfuseError):
    pass


class MissingDataFile(DivfuseError):
    pass


class InvalidSpec(DivfuseError):
    pass


# preprocess

class EmptySignal(DivfuseError):
    pass


class InvalidRate(DivfuseError):
    pass


class NoPeaksFound(DivfuseError):
    pass


class PeakOutOfRange(DivfuseError):
    pass


# features

class DegenerateSignal(DivfuseError):
    pass


class TooShort(DivfuseError):
    pass


class AllRowsDropped(DivfuseError):
    pass


class TooFewSamples(DivfuseError):
    pass


# fusion

class DegenerateSample(DivfuseError):
    pass


class NonFiniteLoss(DivfuseError):
    pass


# classify

class SingleClassInput(DivfuseError):
    pass


class EmptyFeatures(DivfuseError):
    pass


class WidthMismatch(DivfuseError):
    pass


class InsufficientRows(DivfuseError):
    pass


class StageError(DivfuseError):
    """Wraps a lower-level error with the pipeline stage and record id."""

    def __init__(self, stage, cause, record_id=None):
        where = stage if record_id is None else f"{stage} [{record_id}]"
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.record_id = record_id
        self.cause = cause
