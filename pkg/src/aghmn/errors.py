"""Exception hierarchy shared by the library and the CLI"""


class AghmnError(Exception):
    """Base class for every error raised by aghmn."""


class DimensionError(AghmnError, ValueError):
    """An operation received operands whose extents do not conform."""

    def __init__(self, op: str, detail: str):
        self.op = op
        super().__init__(f"{op}: {detail}")


class ContractError(AghmnError, ValueError):
    """A documented precondition was violated."""


class CorpusFormatError(AghmnError, ValueError):
    """A corpus or embedding file could not be parsed."""


class ConfigError(AghmnError, ValueError):
    """A run configuration failed validation.

    Attributes:
        problems: List of ``field: message`` strings, one per invalid field
    """

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class CheckpointError(AghmnError):
    """A checkpoint is unreadable or does not match the requested model."""


class LabelMismatchError(CorpusFormatError):
    """A corpus uses a label outside the configured or checkpointed label set."""
