"""Contextual co-presence detection workbench."""

__version__ = "0.1.0"
