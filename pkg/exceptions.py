"""
Exception hierarchy shared by the library and the command line.

Every error the toolkit raises on purpose derives from FlowLensError, and the
CLI turns it into one of the fixed exit codes with exit_code_for(). Success
is click's default exit status 0.
"""

EXIT_INPUT = 2
EXIT_TRAINING_GUARD = 3
EXIT_LAYOUT = 4


class FlowLensError(Exception):
    """Base class for all toolkit errors."""

    exit_code = EXIT_INPUT


class InputError(FlowLensError, ValueError):
    """Invalid user input: files, schemas, parameters."""


class DataIngestionError(InputError):
    """A dataset file could not be read."""


class RaggedRowError(DataIngestionError):
    """A CSV row has a different number of cells than the header."""


class SchemaError(InputError):
    """The table does not match the declared schema."""


class EmptyDatasetError(InputError):
    """No rows left to work with."""


class SelectionError(InputError):
    """Feature selection kept nothing."""


class ConfigError(InputError):
    """A configuration file or flag combination is invalid."""


class TrainingError(FlowLensError, ValueError):
    """A model cannot be trained on the given data."""

    exit_code = EXIT_TRAINING_GUARD


class TrainingGuardError(TrainingError):
    """A trained model is below the accuracy floor of an experiment."""

    def __init__(self, kind: str, task: str, accuracy: float, floor: float):
        super().__init__(
            f"{kind} ({task}) reached only {accuracy:.4f} test accuracy, below the "
            f"{floor:.2f} floor; check the dataset, schema and training settings"
        )
        self.kind = kind
        self.task = task
        self.accuracy = accuracy
        self.floor = floor


class LayoutMismatchError(FlowLensError, ValueError):
    """Model and table disagree on the feature layout, or a group is unknown."""

    exit_code = EXIT_LAYOUT


class FigureError(FlowLensError, ValueError):
    """A figure cannot be rendered from the given data."""


class BundleError(FlowLensError, OSError):
    """A result bundle cannot be written or fails verification."""


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(exc, FlowLensError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_INPUT
    return 1
