"""Exception hierarchy. Each top-level class carries the CLI exit code it maps to."""


class QcnnBenchError(Exception):
    exit_code = 1


class ConfigError(QcnnBenchError):
    exit_code = 2


class DataError(QcnnBenchError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class IntegrityError(DataError):
    pass


class FetchError(DataError):
    def __init__(self, message, attempts):
        super().__init__(f"{message} after {attempts} attempts")
        self.attempts = attempts


class NumericalError(QcnnBenchError):
    exit_code = 4

    def __init__(self, message, coordinate=None):
        if coordinate is not None:
            message = f"{message} (parameter {coordinate})"
        super().__init__(message)
        self.coordinate = coordinate


# simulator / circuit construction errors are programming or config errors
class InvalidTargetError(ConfigError, ValueError):
    pass


class InvalidGateError(ConfigError, ValueError):
    pass


class ImpossibleOutcomeError(ValueError):
    pass


class ArchitectureError(ConfigError, ValueError):
    pass


class EncodingError(ConfigError, ValueError):
    pass
