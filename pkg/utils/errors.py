"""Error hierarchy shared by every dejavu module.

Each class carries the process exit code the CLI maps it to.
"""


class DejaVuError(Exception):
    exit_code = 2

    def __init__(self, message, ids=None):
        self.ids = list(ids) if ids else []
        if self.ids:
            message = f"{message}: {', '.join(map(str, self.ids))}"
        super().__init__(message)


class ArgumentError(DejaVuError, ValueError):
    exit_code = 1


class FormatError(DejaVuError):
    exit_code = 2

    def __init__(self, message, line=None, ids=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, ids=ids)


class ValidationError(DejaVuError):
    exit_code = 2


class ContractError(DejaVuError):
    exit_code = 2


class AlignmentError(DejaVuError):
    exit_code = 3


class DataError(DejaVuError):
    exit_code = 3


class TrainingError(DejaVuError):
    exit_code = 4

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
