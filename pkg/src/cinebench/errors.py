"""Exception hierarchy shared across the engine.

Metric operations raise :class:`MetricError` with a machine-readable ``code``
(e.g. ``NO_USABLE_FRAMES``); structural problems in manifests or pairs raise
:class:`IntegrityError`; the bundle reader raises one of the three distinct
format errors so callers can tell bad magic from truncation from a bad shape
declaration.
"""

from __future__ import annotations


class CinebenchError(Exception):
    """Base class for all errors raised by this package."""


class IntegrityError(CinebenchError):
    """A record violates a structural invariant (bad span, duplicate id, ...)."""


class BundleFormatError(CinebenchError):
    """Base class for feature-bundle container format errors."""


class BadMagicError(BundleFormatError):
    """Bytes do not start with the container magic."""


class TruncatedBundleError(BundleFormatError):
    """Header or payload is shorter than the declared length."""


class ShapeMismatchError(BundleFormatError):
    """A tensor's declared shape does not match its payload length."""


class MetricError(CinebenchError):
    """A metric precondition failed; ``code`` is machine-readable."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class DegenerateError(MetricError):
    """Keypoint alignment is impossible (too few shared joints / no extent)."""

    def __init__(self, message: str = ""):
        super().__init__("DEGENERATE", message)
