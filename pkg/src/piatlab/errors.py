"""Exception types shared across the package."""
from __future__ import annotations


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DegenerateLogitsError(ValueError):
    """A logit row is too close to zero to normalize."""


class GraphError(RuntimeError):
    """Misuse of a computation graph (non-scalar root, reused graph)."""


class LayoutError(ValueError):
    """A parameter vector does not match the expected layout."""


class ConfigError(ValueError):
    """Invalid configuration.

    ``problems`` holds ``(path, message)`` pairs, one per invalid field.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("", problems)]
        self.problems = list(problems)
        lines = [f"{p or '<root>'}: {m}" for p, m in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


class FormatError(ValueError):
    """A file does not have the expected binary or text format."""


class ConsistencyError(ValueError):
    """Two related inputs disagree (e.g. image and label counts)."""


class NumericError(ArithmeticError):
    """A NaN or infinity appeared where a finite value is required."""

    def __init__(self, message, *, epoch=None, batch=None, iteration=None):
        self.epoch = epoch
        self.batch = batch
        self.iteration = iteration
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch is not None:
            where.append(f"batch {batch}")
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)

    def at_epoch(self, epoch):
        """Return a copy of this error tagged with an epoch index."""
        return NumericError(str(self).split(" (")[0], epoch=epoch,
                            batch=self.batch, iteration=self.iteration)
