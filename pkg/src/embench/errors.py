"""Exception hierarchy shared by every embench module."""


class EmbenchError(Exception):
    """Base class for all errors raised by embench."""


# --- data loading -----------------------------------------------------------

class ParseError(EmbenchError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class ValidationError(EmbenchError, ValueError):
    pass


class DanglingReference(ValidationError):
    def __init__(self, ref):
        self.ref = ref
        super().__init__(ref)


class EmptyDataset(ValidationError):
    pass


class MissingLanguage(EmbenchError, ValueError):
    pass


class ConfigError(EmbenchError, ValueError):
    pass


# --- backends ---------------------------------------------------------------

class BackendUnavailable(EmbenchError):
    pass


class BackendProtocolError(EmbenchError):
    """The remote service answered with a payload that breaks the wire contract."""


class DimensionMismatch(EmbenchError, ValueError):
    pass


class NaNVector(EmbenchError, ValueError):
    pass


class CacheCorrupt(EmbenchError):
    pass


class MissingVector(EmbenchError, KeyError):
    pass


# --- vectors and metrics ----------------------------------------------------

class ZeroVector(EmbenchError, ValueError):
    pass


class NoRelevantDocs(EmbenchError, ValueError):
    pass


class NoPositives(EmbenchError, ValueError):
    pass


class LengthMismatch(EmbenchError, ValueError):
    pass


class DegenerateInput(EmbenchError, ValueError):
    pass


class OneClassOnly(EmbenchError, ValueError):
    pass


# --- evaluators -------------------------------------------------------------

class SingleClass(EmbenchError, ValueError):
    pass


class FewerPointsThanClusters(EmbenchError, ValueError):
    pass


class EmptySide(EmbenchError, ValueError):
    pass


class ItemWithoutPositive(ValidationError):
    pass


# --- mining / synthgen / reporting ------------------------------------------

class CorpusTooSmall(EmbenchError, ValueError):
    pass


class UnknownPositive(EmbenchError, KeyError):
    pass


class NonPositiveTemperature(EmbenchError, ValueError):
    pass


class EmptyTask(EmbenchError, ValueError):
    pass


class GenerationFailed(EmbenchError):
    pass


class UnknownFormat(EmbenchError, ValueError):
    pass
