"""Adapter exception types.

The CLI maps ``AdapterError`` to exit code 3 and OS-level failures to 2,
mirroring the cte toolkit's convention.
"""


class AdapterError(Exception):
    """Configuration, model-spec or contract violation."""


class PlacementError(AdapterError):
    """A dropout placement names layers the model does not have."""
