"""Inference harness exporting predictions in the cte folder format."""

__version__ = "0.1.0"
