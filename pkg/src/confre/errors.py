"""Shared exception types, mapped to CLI exit codes in `confre.cli`."""


class BadInputError(ValueError):
    """Unusable user input: missing files, malformed dims, bad flag combos (exit 2)."""


class BitstreamCorruptError(ValueError):
    """Coded stream failed validation; message includes a byte offset (exit 3)."""


class WeightFormatError(ValueError):
    """Weight file failed validation; message includes a byte offset."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message includes the offending step (exit 4)."""
