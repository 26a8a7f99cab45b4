"""Exception hierarchy shared across the package.

Two families matter to callers: input/format problems (bad files, bad
records, out-of-vocabulary text) and numeric failures during training.
The CLI maps them to distinct exit codes.
"""


class NeglinkError(Exception):
    """Base class for package errors."""


class FormatError(NeglinkError):
    """Malformed input: files, records, serialized artifacts."""


class KBFormatError(FormatError):
    pass


class MentionFormatError(FormatError):
    pass


class VocabError(FormatError):
    """Text contains a character the vocabulary does not cover."""


class TrieFormatError(FormatError):
    pass


class CheckpointFormatError(FormatError):
    pass


class ConfigError(FormatError):
    pass


class NumericError(NeglinkError):
    """Non-finite values where finite ones are required."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
