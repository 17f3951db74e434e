"""Kernel error hierarchy.

Every failure surfaced by the kernel is one of these. The gateway maps
them onto HTTP statuses and CLI exit codes; nothing else leaks out.
"""

from __future__ import annotations


class ItemforgeError(Exception):
    """Base class for all kernel errors."""


class ErrNotFound(ItemforgeError):
    """Item, property, viewpoint, path, version or script does not exist."""


class ErrAccessDenied(ItemforgeError):
    """Agent unknown, session invalid, or required role not held."""


class ErrInvalidTransition(ItemforgeError):
    """No job currently offers this (activity, transition) pair."""


class ErrSchemaViolation(ItemforgeError):
    """A document failed validation against its schema.

    Carries the violation list so callers can render every problem at once.
    """

    def __init__(self, message: str, violations: list[tuple[str, str, str]] | None = None):
        super().__init__(message)
        self.violations = violations or []


class ErrConstraint(ItemforgeError):
    """A domain rule was violated (immutable property, occupied slot, ...)."""


class ErrScriptFailure(ItemforgeError):
    """A script raised, timed out, overflowed the call depth, or returned a bad type."""

    def __init__(self, message: str, event=None):
        super().__init__(message)
        # set when a main event was retained despite the consequence failure
        self.event = event


class ErrDirectWriteForbidden(ItemforgeError):
    """A script attempted storage access outside the kernel gateway."""


class ErrBadRoute(ItemforgeError):
    """A routing script named an activity that is not a child of the split."""


class ErrNoDraft(ItemforgeError):
    """finalize_version called with no draft newer than the last version."""


class ErrNameTaken(ItemforgeError):
    """Directory path already bound to another item."""


class ErrEmptySlot(ItemforgeError):
    """Traversal hit an unassigned aggregation slot."""


class ErrMalformedXML(ItemforgeError):
    """Input is not well-formed XML."""


class ErrUnsupportedConstruct(ItemforgeError):
    """XML Schema source uses a construct outside the supported subset."""


class ErrBadQuery(ItemforgeError):
    """Path-query expression failed to parse."""


class ErrRange(ItemforgeError):
    """Event range out of bounds or inverted."""


class ErrStorage(ItemforgeError):
    """I/O failure; nothing was committed."""


class ErrConfig(ItemforgeError):
    """Bad configuration or store path."""
