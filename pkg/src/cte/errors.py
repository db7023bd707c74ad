"""Exception hierarchy shared across the toolkit.

The CLI maps exception classes to exit codes: OS-level I/O failures exit
with 2, validation failures (malformed arrays, manifests, incompatible
configuration) with 3, degenerate statistics with 4.
"""


class CTEError(Exception):
    """Base class for all toolkit errors."""


class ArrayFormatError(CTEError):
    """Array file or in-memory array violates the array data model."""


class ManifestError(CTEError):
    """Manifest fails schema validation or the completeness invariant."""


class ValidationError(CTEError):
    """Inputs are structurally valid but incompatible with the request."""


class MissingCellError(CTEError):
    """A (model, image, perturbation) score required for aggregation is absent."""


class DegenerateStatisticError(CTEError):
    """A statistic is undefined for the given data (e.g. all-tied scores)."""


class DegenerateReferenceError(DegenerateStatisticError):
    """Reference prediction has no foreground, so ARS is undefined."""
