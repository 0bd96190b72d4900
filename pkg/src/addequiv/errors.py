"""Exception hierarchy shared by all modules."""


class AddEquivError(Exception):
    """Base class for every error raised by the package."""


class DomainError(AddEquivError, ValueError):
    """An evaluation point lies outside the unit cube."""


class ValidationError(AddEquivError, ValueError):
    """A model or function violates one of its declared invariants."""


class ParameterError(AddEquivError, ValueError):
    """A tuning parameter (K, J, grid size, ...) is out of range."""


class AlignmentError(AddEquivError, ValueError):
    """Two grids that must nest do not."""


class DegeneracyError(AddEquivError, ArithmeticError):
    """A Gram matrix is singular where positivity is guaranteed."""


class NonPSDError(AddEquivError, ArithmeticError):
    """A matrix that must be positive semi-definite has a negative eigenvalue."""


class AssumptionError(AddEquivError, ValueError):
    """An operation requires a design assumption (e.g. independence) that fails."""


class ConfigError(AddEquivError, ValueError):
    """A scenario configuration cannot be parsed or validated."""
