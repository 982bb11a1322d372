class ErgolabError(Exception):
    """Base class for errors raised by ergolab."""


class DomainError(ErgolabError, ValueError):
    """A point or parameter lies outside the admissible range."""


class MisuseError(ErgolabError, TypeError):
    """An operation was applied to an object it does not support."""


class BudgetExceeded(ErgolabError):
    """A requested computation would exceed its work budget."""
