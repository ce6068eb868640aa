"""Exception hierarchy shared by all modules."""


class BerkgreenError(Exception):
    """Base class for library errors."""


class InputError(BerkgreenError, ValueError):
    """Invalid user input: unknown ids, offsets out of range, bad files."""


class StructureError(BerkgreenError, ValueError):
    """A graph violates a structural invariant (disconnected, loop edge, cycle in a tree)."""


class AmbiguousPathError(BerkgreenError, ValueError):
    """Meet point requested outside a uniquely path-connected region."""


class DomainError(BerkgreenError, ValueError):
    """Mathematical precondition violated (type-I base point, indeterminate infinity, ...)."""
