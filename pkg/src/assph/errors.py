"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes, so every failure raised out of
library code should be one of the three classes below (or a subclass).
"""


class ConfigError(ValueError):
    """A configuration value violates its documented range or type."""


class DataError(ValueError):
    """An input file or in-memory dataset violates the format contract."""


class DivergenceError(ArithmeticError):
    """Training produced non-finite values or degenerate embeddings."""
