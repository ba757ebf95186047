"""Streaming post-processing of frame archives and deterministic plot documents."""

__version__ = "0.1.0"
