"""Exception hierarchy shared by all pipeline stages.

Each class maps to one CLI exit code (see ``sfegacn.cli.EXIT_CODES``).
"""


class SfeGacnError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SfeGacnError, ValueError):
    """Invalid hyperparameter, missing label, or violated precondition."""


class ShapeError(SfeGacnError, ValueError):
    """Array dimensions do not match what a network or model expects."""


class SchemaError(ShapeError):
    """A feature table does not match the schema a model was fitted on."""


class RangeError(SfeGacnError, ValueError):
    """A quantized value does not fit in its column's bit width."""


class DataFormatError(SfeGacnError, ValueError):
    """Malformed CSV input or model container."""


class NumericError(SfeGacnError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, *, epoch=None, batch=None, iteration=None):
        where = []
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.iteration = iteration
